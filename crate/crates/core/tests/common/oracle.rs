//! Reference computations written independently of the library's solvers.

use eikf::filter::FusionProblem;
use eikf::gaussian::{BeliefState, Matrix15};
use eikf::lie::{ExtendedPose, Vector9};
use eikf::sensors::{ErrorConvention, MeasurementBatch, SensorRig};
use nalgebra::{DMatrix, SMatrix};

/// Single invariant EKF update in innovation-covariance form, `K = P̄Hᵀ(HP̄Hᵀ + σ²I)⁻¹`.
pub fn kalman_update(belief: &BeliefState, batch: &MeasurementBatch, rig: &SensorRig, sigma: f64) -> (ExtendedPose, Matrix15) {
    let x_bar = belief.mean;
    let lin = batch.linearize(rig, &x_bar.pose(), ErrorConvention::LeftInvariant);
    let m = lin.rows();
    let mut h = DMatrix::zeros(m, 15);
    h.columns_mut(0, 6).copy_from(&lin.jacobian);
    let p = DMatrix::from_column_slice(15, 15, belief.cov.as_slice());
    let hp = &h * &p;
    let s = &hp * h.transpose() + DMatrix::identity(m, m) * (sigma * sigma);
    let k = s.cholesky().expect("innovation covariance is positive definite").solve(&hp).transpose();
    let delta = &k * &lin.innovation;
    let mean = ExtendedPose::exp(&Vector9::from_iterator(delta.rows(0, 9).iter().cloned())) * x_bar;
    let cov = &p - &k * &hp;
    (mean, Matrix15::from_iterator(cov.iter().cloned()))
}

fn gradient(f: &dyn Fn(&Vector9) -> f64, x: &Vector9, h: f64) -> Vector9 {
    Vector9::from_fn(|i, _| {
        let mut e = Vector9::zeros();
        e[i] = h;
        (f(&(x + e)) - f(&(x - e))) / (2.0 * h)
    })
}

fn hessian(f: &dyn Fn(&Vector9) -> f64, x: &Vector9, h: f64) -> SMatrix<f64, 9, 9> {
    let mut out = SMatrix::<f64, 9, 9>::zeros();
    for i in 0..9 {
        for j in i..9 {
            let mut ei = Vector9::zeros();
            let mut ej = Vector9::zeros();
            ei[i] = h;
            ej[j] = h;
            let v = (f(&(x + ei + ej)) - f(&(x + ei - ej)) - f(&(x - ei + ej)) + f(&(x - ei - ej))) / (4.0 * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Minimiser of the fusion objective by damped Newton on finite-difference
/// derivatives, returned as the tangent `δ` about the prior mean.
pub fn brute_force_fusion(problem: &FusionProblem) -> Vector9 {
    let info = problem.prior_cov.try_inverse().expect("prior covariance is invertible");
    let f = |d: &Vector9| {
        let t = (ExtendedPose::exp(d) * problem.prior_mean).pose();
        let e = (problem.mle * t.inverse()).log().expect("pose error inside the log domain");
        (d.transpose() * info * d)[0] + (e.transpose() * problem.fisher * e)[0]
    };
    let mut x = Vector9::zeros();
    for _ in 0..100 {
        let g = gradient(&f, &x, 1e-6);
        let hs = hessian(&f, &x, 1e-4);
        let step = hs.cholesky().expect("objective is locally convex").solve(&g);
        let mut t = 1.0;
        let f0 = f(&x);
        while f(&(x - step * t)) > f0 && t > 1e-8 {
            t *= 0.5;
        }
        x -= step * t;
        if (step * t).norm() < 1e-13 {
            break;
        }
    }
    x
}
