//! Fusing a Gaussian prior with a pose-only maximum-likelihood estimate.
//!
//! When the measurement likelihood is summarised by its maximiser `T_MLE` and
//! Fisher information `F`, the posterior mode over the navigation state is
//! the minimiser of
//!
//! ```text
//! f(δ) = δᵀ P̄⁻¹ δ + e(δ)ᵀ F e(δ),   e(δ) = log(T_MLE · T(exp(δ) X̄)⁻¹)
//! ```
//!
//! where `T(·)` drops the velocity.

use super::FilterError;
use crate::gaussian::symmetrize;
use crate::lie::{se3_left_jacobian, se3_left_jacobian_inv, ExtendedPose, Matrix9, Pose, Vector9};
use crate::sensors::{ErrorConvention, MeasurementBatch, SensorRig};
use nalgebra::{Matrix6, SMatrix, Vector6};

type Matrix6x9 = SMatrix<f64, 6, 9>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionProblem {
    pub prior_mean: ExtendedPose,
    pub prior_cov: Matrix9,
    pub mle: Pose,
    pub fisher: Matrix6<f64>,
}

fn selector() -> Matrix6x9 {
    let mut s = Matrix6x9::zeros();
    s.fixed_view_mut::<6, 6>(0, 0).fill_with_identity();
    s
}

fn pose_part(d: &Vector9) -> Vector6<f64> {
    d.fixed_rows::<6>(0).into_owned()
}

impl FusionProblem {
    fn prior_info(&self) -> Result<Matrix9, FilterError> {
        self.prior_cov
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| FilterError::NumericalFailure("prior covariance is not positive definite".into()))
    }

    /// `e(δ)`.
    pub fn pose_error(&self, delta: &Vector9) -> Result<Vector6<f64>, FilterError> {
        let t = (ExtendedPose::exp(delta) * self.prior_mean).pose();
        Ok((self.mle * t.inverse()).log()?)
    }

    /// `f(δ)`.
    pub fn objective(&self, delta: &Vector9) -> Result<f64, FilterError> {
        let info = self.prior_info()?;
        let e = self.pose_error(delta)?;
        Ok((delta.transpose() * info * delta)[0] + (e.transpose() * self.fisher * e)[0])
    }

    /// Minimises `f` by Gauss-Newton from `δ = 0`, returning the iterates.
    fn gauss_newton(&self, max_iterations: usize, tol: f64) -> Result<Vec<Vector9>, FilterError> {
        let info = self.prior_info()?;
        let s = selector();
        let mut delta = Vector9::zeros();
        let mut iterates = Vec::new();
        for _ in 0..max_iterations {
            let e = self.pose_error(&delta)?;
            // de/dy = -J_r(e)⁻¹ J_l(y) for y = Ĩδ.
            let de = -se3_left_jacobian_inv(&(-e)) * se3_left_jacobian(&pose_part(&delta));
            let a = de * s;
            let mut lhs = info + a.transpose() * self.fisher * a;
            symmetrize(&mut lhs);
            let rhs = a.transpose() * self.fisher * (a * delta - e);
            let next = lhs
                .cholesky()
                .map(|c| c.solve(&rhs))
                .ok_or_else(|| FilterError::NumericalFailure("fusion normal matrix".into()))?;
            let step = (next - delta).norm();
            delta = next;
            iterates.push(delta);
            if step <= tol * (1.0 + delta.norm()) {
                break;
            }
        }
        Ok(iterates)
    }
}

/// Gauss-Newton maximum-likelihood body pose and its Fisher information.
pub fn mle_pose(
    batch: &MeasurementBatch,
    rig: &SensorRig,
    init: &Pose,
    sigma: f64,
    max_iterations: usize,
    tol: f64,
) -> Result<(Pose, Matrix6<f64>), FilterError> {
    let mut t = *init;
    for _ in 0..max_iterations {
        let lin = batch.linearize(rig, &t, ErrorConvention::LeftInvariant);
        if lin.rows() < 6 {
            return Err(FilterError::EmptyBatch);
        }
        let hth = lin.jacobian.tr_mul(&lin.jacobian);
        let hty = lin.jacobian.tr_mul(&lin.innovation);
        let step = hth
            .cholesky()
            .map(|c| c.solve(&hty))
            .ok_or_else(|| FilterError::NumericalFailure("rank-deficient pose Jacobian".into()))?;
        let step = Vector6::from_iterator(step.iter().cloned());
        t = Pose::exp(&step) * t;
        if step.norm() <= tol {
            break;
        }
    }
    Ok((t, fisher_information(batch, rig, &t, sigma)))
}

/// `HᵀH/σ²` of the batch linearised at `pose`.
pub fn fisher_information(batch: &MeasurementBatch, rig: &SensorRig, pose: &Pose, sigma: f64) -> Matrix6<f64> {
    let lin = batch.linearize(rig, pose, ErrorConvention::LeftInvariant);
    let hth = lin.jacobian.tr_mul(&lin.jacobian) / (sigma * sigma);
    Matrix6::from_iterator(hth.iter().cloned())
}

/// Closed-form posterior mode from the first linearisation at the prior mean.
///
/// `δ̂ = (P̄⁻¹ + ĨᵀWᵀFWĨ)⁻¹ ĨᵀWᵀF δ̃` with `δ̃ = log(T_MLE T̄⁻¹)` and
/// `W = J_r(δ̃)⁻¹`.
pub fn fused_map_closed_form(problem: &FusionProblem) -> Result<ExtendedPose, FilterError> {
    let delta = problem
        .gauss_newton(1, 0.0)?
        .pop()
        .expect("one iterate");
    Ok(ExtendedPose::exp(&delta) * problem.prior_mean)
}

/// Posterior mode refined to convergence, starting from the closed form.
pub fn fused_map_with_virtual_pose(problem: &FusionProblem) -> Result<ExtendedPose, FilterError> {
    let delta = problem
        .gauss_newton(50, 1e-14)?
        .pop()
        .expect("at least one iterate");
    Ok(ExtendedPose::exp(&delta) * problem.prior_mean)
}
