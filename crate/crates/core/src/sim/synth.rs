use super::config::{PlacementSpec, ScenarioConfig, SensorKind};
use super::trajectory::TrajectorySpec;
use crate::gaussian::{NoiseParams, GRAVITY};
use crate::lie::{ExtendedPose, Pose};
use crate::sensors::{project, CameraIntrinsics, CameraObservation, ImuSample, LidarPoint, MeasurementBatch};
use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, UnitSphere};

fn normal3<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// IMU readings on `[0, duration)` at `rate`, with true biases at each sample.
///
/// Each reading is taken at the midpoint of its hold interval. Continuous
/// noise densities are scaled by `√rate`; biases random-walk from zero.
pub fn synthesize_imu<R: Rng + ?Sized>(
    spec: &TrajectorySpec,
    duration: f64,
    rate: f64,
    params: &NoiseParams,
    rng: &mut R,
) -> Vec<ImuSample> {
    let dt = 1.0 / rate;
    let steps = (duration * rate).round() as usize;
    let sd_g = params.sigma_gyro * rate.sqrt();
    let sd_a = params.sigma_accel * rate.sqrt();
    let walk_g = params.sigma_bias_gyro / rate.sqrt();
    let walk_a = params.sigma_bias_accel / rate.sqrt();
    let mut bg = Vector3::zeros();
    let mut ba = Vector3::zeros();
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 * dt;
        let truth = spec.ground_truth(t + 0.5 * dt);
        let specific = truth.state.rot.transpose() * (truth.accel - GRAVITY);
        out.push(ImuSample {
            t,
            gyro: truth.omega + bg + normal3(rng, sd_g),
            accel: specific + ba + normal3(rng, sd_a),
        });
        bg += normal3(rng, walk_g);
        ba += normal3(rng, walk_a);
    }
    out
}

/// `n` landmarks spread over the camera's view, observed with pixel noise `sigma`.
///
/// Landmarks are drawn uniformly in the image and in depth, so every one is
/// visible before noise is added.
pub fn synthesize_camera<R: Rng + ?Sized>(
    body: &Pose,
    extrinsics: &Pose,
    intr: &CameraIntrinsics,
    placement: &PlacementSpec,
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> MeasurementBatch {
    let cam = body * extrinsics;
    let [d0, d1] = placement.camera_depth;
    let mut obs = Vec::with_capacity(n);
    while obs.len() < n {
        let pixel = Vector2::new(rng.random_range(0.0..intr.width), rng.random_range(0.0..intr.height));
        let depth = rng.random_range(d0..=d1);
        let landmark = cam.transform_point(&intr.back_project(&pixel, depth));
        let Some(clean) = project(intr, &(cam.inverse().transform_point(&landmark))) else {
            continue;
        };
        let noise = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
        obs.push(CameraObservation {
            id: obs.len() as u64,
            landmark,
            pixel: clean + noise * sigma,
        });
    }
    MeasurementBatch::Camera(obs)
}

/// `n` returns on random local planes, each with isotropic point noise `sigma`.
pub fn synthesize_lidar<R: Rng + ?Sized>(
    body: &Pose,
    extrinsics: &Pose,
    placement: &PlacementSpec,
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> MeasurementBatch {
    let lidar = body * extrinsics;
    let [r0, r1] = placement.lidar_range;
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let dir = Vector3::from(UnitSphere.sample(rng));
        let normal = Vector3::from(UnitSphere.sample(rng));
        let world_dir = lidar.rot * dir;
        if normal.dot(&world_dir).abs() < placement.min_incidence {
            continue;
        }
        let local = dir * rng.random_range(r0..=r1);
        let world = lidar.transform_point(&local);
        let offset = normal3(rng, 1.0);
        let tangent = offset - normal * normal.dot(&offset);
        let spread = placement.anchor_spread * rng.random_range(0.0..=1.0);
        let anchor = world + tangent.try_normalize(1e-12).unwrap_or_default() * spread;
        points.push(LidarPoint {
            point: local + normal3(rng, sigma),
            normal,
            anchor,
        });
    }
    MeasurementBatch::Lidar(points)
}

/// Everything one Monte-Carlo trial feeds to the filters.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub imu: Vec<ImuSample>,
    /// Sensor frame times, excluding `t = 0`.
    pub frame_times: Vec<f64>,
    pub frames: Vec<MeasurementBatch>,
    pub truth: Vec<ExtendedPose>,
    pub initial_truth: ExtendedPose,
}

pub fn synthesize_trial<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> TrialData {
    let imu = synthesize_imu(&cfg.trajectory, cfg.duration, cfg.imu_rate, &cfg.imu_noise, rng);
    let rig = cfg.rig();
    let frames_total = (cfg.duration * cfg.sensor_rate()).round() as usize;
    let mut frame_times = Vec::with_capacity(frames_total);
    let mut frames = Vec::with_capacity(frames_total);
    let mut truth = Vec::with_capacity(frames_total);
    for j in 1..=frames_total {
        let t = j as f64 / cfg.sensor_rate();
        let x = cfg.trajectory.ground_truth(t).state;
        let body = x.pose();
        let batch = match cfg.sensor {
            SensorKind::Camera => synthesize_camera(
                &body,
                &rig.camera_extrinsics,
                &rig.intrinsics,
                &cfg.placement,
                cfg.landmarks,
                cfg.sigma_camera,
                rng,
            ),
            SensorKind::Lidar => {
                synthesize_lidar(&body, &rig.lidar_extrinsics, &cfg.placement, cfg.landmarks, cfg.sigma_lidar, rng)
            }
        };
        frame_times.push(t);
        frames.push(batch);
        truth.push(x);
    }
    TrialData {
        imu,
        frame_times,
        frames,
        truth,
        initial_truth: cfg.trajectory.ground_truth(0.0).state,
    }
}
