//! Reduced-size property checks runnable from a release binary.

use crate::consistent::{consistent_pose, BiasCorrection};
use crate::filter::{iterated_update, FilterConfig};
use crate::gaussian::{BeliefState, Matrix15};
use crate::lie::{little_ad, ExtendedPose, Pose, Vector9};
use crate::sensors::{
    camera_jacobian, camera_residual, lidar_jacobian, lidar_residual, ErrorConvention, MeasurementBatch,
};
use crate::sim::{synthesize_camera, synthesize_lidar, PlacementSpec, ScenarioConfig};
use nalgebra::{DMatrix, DVector, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A deliberate defect for checking that the suite catches it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Negates the rotation columns of the analytic camera Jacobian.
    CameraJacobianSignFlip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        passed: worst.is_finite() && worst <= tol,
        detail: format!("worst {worst:.3e} (tolerance {tol:.0e})"),
    }
}

fn gaussian_vec<const D: usize>(rng: &mut ChaCha8Rng, sd: f64) -> nalgebra::SVector<f64, D> {
    nalgebra::SVector::from_fn(|_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let mut xi: Vector6<f64> = gaussian_vec(rng, 1.0);
    xi.fixed_rows_mut::<3>(3).scale_mut(5.0);
    Pose::exp(&xi)
}

fn random_extended(rng: &mut ChaCha8Rng) -> ExtendedPose {
    let mut xi: Vector9 = gaussian_vec(rng, 1.0);
    xi.fixed_rows_mut::<6>(3).scale_mut(5.0);
    ExtendedPose::exp(&xi)
}

/// Runs every check with `fault` injected.
pub fn run(fault: Fault, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        lie_round_trip(&mut rng),
        adjoint_conjugation(&mut rng),
        camera_jacobian_fd(&mut rng, fault),
        lidar_jacobian_fd(&mut rng),
        consistent_noiseless(&mut rng),
        one_step_matches_kalman_form(&mut rng),
    ]
}

fn lie_round_trip(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let mut xi: Vector9 = gaussian_vec(rng, 1.0);
        let theta = xi.fixed_rows::<3>(0).norm();
        if theta > 3.0 {
            xi.fixed_rows_mut::<3>(0).scale_mut(3.0 / theta);
        }
        let back = ExtendedPose::exp(&xi).log().map(|l| (l - xi).norm()).unwrap_or(f64::INFINITY);
        worst = worst.max(back);
    }
    check("se23 exp/log round trip", worst, 1e-9)
}

fn adjoint_conjugation(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let x = random_extended(rng);
        let xi: Vector9 = gaussian_vec(rng, 0.5);
        let lhs = ExtendedPose::exp(&(x.adjoint() * xi)).to_matrix();
        let rhs = (x * ExtendedPose::exp(&xi) * x.inverse()).to_matrix();
        worst = worst.max((lhs - rhs).norm() / rhs.norm());
        let a = little_ad(&xi);
        worst = worst.max((x.adjoint() * a * x.inverse().adjoint() - little_ad(&(x.adjoint() * xi))).norm());
    }
    check("adjoint conjugation", worst, 1e-10)
}

/// Relative Frobenius distance between `analytic` and `-∂r/∂ξ` by central differences.
fn fd_mismatch(analytic: &DMatrix<f64>, residual: impl Fn(&Pose) -> DVector<f64>, t: &Pose, sign: f64) -> f64 {
    let eps = 1e-6;
    let mut fd = DMatrix::zeros(analytic.nrows(), 6);
    for k in 0..6 {
        let mut d = Vector6::zeros();
        d[k] = eps;
        let plus = residual(&(Pose::exp(&d) * *t));
        let minus = residual(&(Pose::exp(&(-d)) * *t));
        fd.set_column(k, &((plus - minus) * (sign / (2.0 * eps))));
    }
    let a = analytic.columns(0, 6);
    (a - &fd).norm() / fd.norm().max(1e-300)
}

fn camera_jacobian_fd(rng: &mut ChaCha8Rng, fault: Fault) -> CheckResult {
    let rig = ScenarioConfig::vio().rig();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let t = random_pose(rng);
        let MeasurementBatch::Camera(obs) =
            synthesize_camera(&t, &rig.camera_extrinsics, &rig.intrinsics, &PlacementSpec::default(), 20, 1.0, rng)
        else {
            unreachable!()
        };
        let Ok(mut h) = camera_jacobian(&t, &rig.camera_extrinsics, &rig.intrinsics, &obs) else {
            worst = f64::INFINITY;
            continue;
        };
        if fault == Fault::CameraJacobianSignFlip {
            h.columns_mut(0, 3).neg_mut();
        }
        let r = |p: &Pose| {
            camera_residual(p, &rig.camera_extrinsics, &rig.intrinsics, &obs).expect("features stay in front")
        };
        worst = worst.max(fd_mismatch(&h, r, &t, -1.0));
    }
    check("camera Jacobian vs finite differences", worst, 1e-4)
}

fn lidar_jacobian_fd(rng: &mut ChaCha8Rng) -> CheckResult {
    let rig = ScenarioConfig::lio().rig();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let t = random_pose(rng);
        let MeasurementBatch::Lidar(points) =
            synthesize_lidar(&t, &rig.lidar_extrinsics, &PlacementSpec::default(), 20, 0.2, rng)
        else {
            unreachable!()
        };
        let h = lidar_jacobian(&t, &rig.lidar_extrinsics, &points);
        let r = |p: &Pose| lidar_residual(p, &rig.lidar_extrinsics, &points);
        worst = worst.max(fd_mismatch(&h, r, &t, 1.0));
    }
    check("LiDAR Jacobian vs finite differences", worst, 1e-4)
}

fn consistent_noiseless(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for lidar in [false, true] {
        let cfg = if lidar { ScenarioConfig::lio() } else { ScenarioConfig::vio() };
        let rig = cfg.rig();
        for _ in 0..5 {
            let t = random_pose(rng);
            let batch = if lidar {
                synthesize_lidar(&t, &rig.lidar_extrinsics, &cfg.placement, 200, 0.0, rng)
            } else {
                synthesize_camera(&t, &rig.camera_extrinsics, &rig.intrinsics, &cfg.placement, 200, 0.0, rng)
            };
            let sensor = t * batch.extrinsics(&rig);
            let err = consistent_pose(&batch, &rig, BiasCorrection::Estimated)
                .ok()
                .and_then(|c| (c.pose * sensor.inverse()).log().ok())
                .map_or(f64::INFINITY, |e| e.norm());
            worst = worst.max(err);
        }
    }
    check("noise-free consistent pose recovery", worst, 1e-7)
}

fn one_step_matches_kalman_form(rng: &mut ChaCha8Rng) -> CheckResult {
    let cfg = ScenarioConfig::vio();
    let rig = cfg.rig();
    let fcfg: FilterConfig = cfg.filter_config();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let truth = random_extended(rng);
        let offset: Vector9 = gaussian_vec(rng, 0.05);
        let x_bar = ExtendedPose::exp(&offset) * truth;
        let a = DMatrix::<f64>::from_fn(15, 15, |_, _| rng.sample::<f64, _>(StandardNormal));
        let p = Matrix15::from_iterator((&a * a.transpose() * 0.01 + DMatrix::identity(15, 15) * 1e-3).iter().cloned());
        let belief = BeliefState::new(x_bar, p);
        let batch =
            synthesize_camera(&truth.pose(), &rig.camera_extrinsics, &rig.intrinsics, &cfg.placement, 30, 1.0, rng);
        let sigma = 1.0;
        let Ok((post, _)) = iterated_update(&belief, &batch, &x_bar, sigma, 1, &fcfg) else {
            worst = f64::INFINITY;
            continue;
        };

        let lin = batch.linearize(&rig, &x_bar.pose(), ErrorConvention::LeftInvariant);
        let m = lin.rows();
        let mut h = DMatrix::zeros(m, 15);
        h.columns_mut(0, 6).copy_from(&lin.jacobian);
        let pd = DMatrix::from_column_slice(15, 15, p.as_slice());
        let s = &h * &pd * h.transpose() + DMatrix::identity(m, m) * (sigma * sigma);
        let k = &pd * h.transpose() * s.try_inverse().expect("S is positive definite");
        let delta = &k * &lin.innovation;
        let mean = ExtendedPose::exp(&Vector9::from_iterator(delta.rows(0, 9).iter().cloned())) * x_bar;
        let cov = (DMatrix::identity(15, 15) - &k * &h) * &pd;

        let dm = (post.mean.to_matrix() - mean.to_matrix()).norm();
        let dc = (DMatrix::from_column_slice(15, 15, post.cov.as_slice()) - &cov).norm() / cov.norm();
        worst = worst.max(dm).max(dc);
    }
    check("one-step invariant update vs Kalman form", worst, 1e-9)
}
