mod common;

use approx::assert_relative_eq;
use common::*;
use eikf::gaussian::GRAVITY;
use eikf::lie::{so3_exp, ExtendedPose, Pose};
use eikf::sensors::*;
use eikf::sim::{synthesize_camera, synthesize_lidar, PlacementSpec};
use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use rand::Rng;

fn rig(g: &mut rand_chacha::ChaCha8Rng) -> SensorRig {
    let mut xi: Vector6<f64> = normal(g, 0.1);
    xi.fixed_rows_mut::<3>(3).scale_mut(2.0);
    SensorRig {
        camera_extrinsics: Pose::exp(&xi),
        lidar_extrinsics: Pose::exp(&(-xi)),
        ..SensorRig::default()
    }
}

fn camera_obs(batch: &MeasurementBatch) -> &[CameraObservation] {
    match batch {
        MeasurementBatch::Camera(o) => o,
        _ => unreachable!(),
    }
}

fn lidar_points(batch: &MeasurementBatch) -> &[LidarPoint] {
    match batch {
        MeasurementBatch::Lidar(p) => p,
        _ => unreachable!(),
    }
}

/// Central differences under `R ← R exp(δθ)`, `p ← p + δp`.
fn fd_body(t: &Pose, f: impl Fn(&Pose) -> DVector<f64>) -> DMatrix<f64> {
    let eps = 1e-6;
    let rows = f(t).len();
    let mut j = DMatrix::zeros(rows, 6);
    let bump = |d: &Vector6<f64>| {
        Pose::new(
            t.rot * so3_exp(&d.fixed_rows::<3>(0).into_owned()),
            t.trans + d.fixed_rows::<3>(3),
        )
    };
    for k in 0..6 {
        let mut d = Vector6::zeros();
        d[k] = eps;
        j.set_column(k, &((f(&bump(&d)) - f(&bump(&(-d)))) / (2.0 * eps)));
    }
    j
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

#[test]
fn projection_examples() {
    let intr = CameraIntrinsics::default();
    assert_eq!(project(&intr, &Vector3::new(0.0, 0.0, 5.0)).unwrap(), nalgebra::Vector2::new(320.0, 240.0));
    assert_relative_eq!(
        project(&intr, &Vector3::new(2.5, 0.0, 5.0)).unwrap(),
        nalgebra::Vector2::new(550.0, 240.0),
        epsilon = 1e-12
    );
    assert!(project(&intr, &Vector3::new(0.0, 0.0, -1.0)).is_none());
    let behind = CameraObservation {
        id: 7,
        landmark: Vector3::new(0.0, 0.0, -1.0),
        pixel: nalgebra::Vector2::new(320.0, 240.0),
    };
    let err = camera_residual(&Pose::identity(), &Pose::identity(), &intr, &[behind]).unwrap_err();
    assert!(matches!(err, SensorError::BehindCamera { id: 7, .. }));
}

#[test]
fn residuals_vanish_at_truth_and_carry_the_noise() {
    let mut g = rng(40);
    let placement = PlacementSpec::default();
    for _ in 0..10 {
        let r = rig(&mut g);
        let t = pose(&mut g);
        let cam = synthesize_camera(&t, &r.camera_extrinsics, &r.intrinsics, &placement, 200, 0.0, &mut g);
        let res = camera_residual(&t, &r.camera_extrinsics, &r.intrinsics, camera_obs(&cam)).unwrap();
        assert!(res.amax() < 1e-9);
        let lid = synthesize_lidar(&t, &r.lidar_extrinsics, &placement, 200, 0.0, &mut g);
        assert!(lidar_residual(&t, &r.lidar_extrinsics, lidar_points(&lid)).amax() < 1e-9);
    }

    let r = rig(&mut g);
    let t = pose(&mut g);
    let cam = synthesize_camera(&t, &r.camera_extrinsics, &r.intrinsics, &placement, 5000, 1.5, &mut g);
    let res = camera_residual(&t, &r.camera_extrinsics, &r.intrinsics, camera_obs(&cam)).unwrap();
    let var = res.norm_squared() / res.len() as f64;
    assert!((var / 2.25 - 1.0).abs() < 0.1, "camera residual variance {var}");

    // A point perturbed isotropically moves off its plane by the same deviation.
    let lid = synthesize_lidar(&t, &r.lidar_extrinsics, &placement, 5000, 0.05, &mut g);
    let res = lidar_residual(&t, &r.lidar_extrinsics, lidar_points(&lid));
    let var = res.norm_squared() / res.len() as f64;
    assert!((var / 0.0025 - 1.0).abs() < 0.1, "lidar residual variance {var}");
}

#[test]
fn camera_jacobian_matches_finite_differences() {
    let mut g = rng(41);
    let placement = PlacementSpec::default();
    for _ in 0..100 {
        let r = rig(&mut g);
        let t = pose(&mut g);
        let batch = synthesize_camera(&t, &r.camera_extrinsics, &r.intrinsics, &placement, 20, 1.0, &mut g);
        let obs = camera_obs(&batch);
        let ext = r.camera_extrinsics;
        let h = camera_jacobian(&t, &ext, &r.intrinsics, obs).unwrap();
        assert_eq!(h.ncols(), 9);
        assert_eq!(h.columns(6, 3).amax(), 0.0);
        let fd = fd_left(&t, |p| camera_residual(p, &ext, &r.intrinsics, obs).unwrap());
        let h6 = h.columns(0, 6).into_owned();
        assert!(rel_err(&(-&h6), &fd) < 1e-5, "{:e}", rel_err(&(-&h6), &fd));

        // Innovation y = r, so H = -∂y/∂δ in both conventions.
        let lin = batch.linearize(&r, &t, ErrorConvention::LeftInvariant);
        assert_relative_eq!(lin.jacobian, h6, epsilon = 1e-12);
        let lin = batch.linearize(&r, &t, ErrorConvention::BodyRotation);
        let fd = fd_body(&t, |p| camera_residual(p, &ext, &r.intrinsics, obs).unwrap());
        assert!(rel_err(&(-&lin.jacobian), &fd) < 1e-5);
    }
}

#[test]
fn lidar_jacobian_matches_finite_differences() {
    let mut g = rng(42);
    let placement = PlacementSpec::default();
    for _ in 0..100 {
        let r = rig(&mut g);
        let t = pose(&mut g);
        let batch = synthesize_lidar(&t, &r.lidar_extrinsics, &placement, 20, 0.05, &mut g);
        let pts = lidar_points(&batch);
        let ext = r.lidar_extrinsics;
        let h = lidar_jacobian(&t, &ext, pts);
        assert_eq!(h.columns(6, 3).amax(), 0.0);
        let fd = fd_left(&t, |p| lidar_residual(p, &ext, pts));
        let h6 = h.columns(0, 6).into_owned();
        assert!(rel_err(&h6, &fd) < 1e-5, "{:e}", rel_err(&h6, &fd));

        // Innovation y = -r.
        let lin = batch.linearize(&r, &t, ErrorConvention::LeftInvariant);
        assert_relative_eq!(lin.jacobian, h6, epsilon = 1e-12);
        assert_relative_eq!(lin.innovation, -lidar_residual(&t, &ext, pts), epsilon = 1e-12);
        let lin = batch.linearize(&r, &t, ErrorConvention::BodyRotation);
        let fd = fd_body(&t, |p| lidar_residual(p, &ext, pts));
        assert!(rel_err(&lin.jacobian, &fd) < 1e-5);
    }
}

#[test]
fn gauss_newton_step_contracts_residual() {
    let mut g = rng(43);
    let placement = PlacementSpec::default();
    for k in 0..40 {
        let r = rig(&mut g);
        let truth = pose(&mut g);
        let batch = if k % 2 == 0 {
            synthesize_camera(&truth, &r.camera_extrinsics, &r.intrinsics, &placement, 50, 0.0, &mut g)
        } else {
            synthesize_lidar(&truth, &r.lidar_extrinsics, &placement, 50, 0.0, &mut g)
        };
        let start = Pose::exp(&normal::<6>(&mut g, 1e-3)) * truth;
        let lin = batch.linearize(&r, &start, ErrorConvention::LeftInvariant);
        let step = lin.jacobian.clone().svd(true, true).solve(&lin.innovation, 1e-12).unwrap();
        let moved = Pose::exp(&Vector6::from_iterator(step.iter().cloned())) * start;
        let after = batch.linearize(&r, &moved, ErrorConvention::LeftInvariant);
        assert!(after.innovation.norm() * 100.0 <= lin.innovation.norm());
    }
}

#[test]
fn imu_integration_matches_fine_euler() {
    let mut g = rng(44);
    for _ in 0..10 {
        let x = extended_pose(&mut g);
        let bg: Vector3<f64> = normal(&mut g, 0.01);
        let ba: Vector3<f64> = normal(&mut g, 0.1);
        let sample = ImuSample {
            t: 0.0,
            gyro: normal(&mut g, 1.0),
            accel: normal(&mut g, 3.0),
        };
        let dt = g.random_range(0.005..0.2);
        let got = imu_mean_propagate(&x, &bg, &ba, &sample, dt, &GRAVITY);

        let steps = 200_000;
        let h = dt / steps as f64;
        let (w, a) = (sample.gyro - bg, sample.accel - ba);
        let step_rot = so3_exp(&(w * h));
        let (mut rot, mut pos, mut vel) = (x.rot, x.pos, x.vel);
        for _ in 0..steps {
            // Midpoint rule on the rotation driving the acceleration.
            let mid = rot * so3_exp(&(w * 0.5 * h));
            let acc = mid * a + GRAVITY;
            pos += vel * h + acc * (0.5 * h * h);
            vel += acc * h;
            rot *= step_rot;
        }
        let expect = ExtendedPose::new(rot, pos, vel);
        assert_relative_eq!(got.rot, expect.rot, epsilon = 1e-9);
        assert_relative_eq!(got.vel, expect.vel, epsilon = 1e-8);
        assert_relative_eq!(got.pos, expect.pos, epsilon = 1e-8);
    }
}
