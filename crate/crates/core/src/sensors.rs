//! IMU kinematics and the camera and LiDAR measurement models.
//!
//! Residuals are reported in the form each sensor is usually written in.
//! [`MeasurementBatch::linearize`] turns them into an innovation `y` and a
//! Jacobian `H = -∂y/∂δ`, so a Gauss-Newton step is always `δ = H⁺ y`.

use crate::lie::{hat, so3_exp, so3_left_jacobian, so3_second_integral, ExtendedPose, Pose};
use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, RowVector3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Points closer than this to the camera plane are treated as behind it.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SensorError {
    #[error("landmark {id} projects behind the camera (depth {depth})")]
    BehindCamera { id: u64, depth: f64 },
    #[error("feature references unknown landmark {0}")]
    MissingLandmark(u64),
}

/// One IMU reading, held constant over `[t, t + dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

/// Integrates the navigation state over one IMU interval.
///
/// Rotation, velocity and position are integrated exactly for inputs held
/// constant over the interval.
pub fn imu_mean_propagate(
    x: &ExtendedPose,
    bias_gyro: &Vector3<f64>,
    bias_accel: &Vector3<f64>,
    sample: &ImuSample,
    dt: f64,
    gravity: &Vector3<f64>,
) -> ExtendedPose {
    let phi = (sample.gyro - bias_gyro) * dt;
    let a = sample.accel - bias_accel;
    let g1 = so3_left_jacobian(&phi);
    let g2 = so3_second_integral(&phi);
    ExtendedPose::new(
        x.rot * so3_exp(&phi),
        x.pos + x.vel * dt + x.rot * (g2 * a) * (dt * dt) + gravity * (0.5 * dt * dt),
        x.vel + x.rot * (g1 * a) * dt + gravity * dt,
    )
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fx: 460.0,
            fy: 460.0,
            cx: 320.0,
            cy: 240.0,
            width: 640.0,
            height: 480.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0 && pixel.x <= self.width && pixel.y >= 0.0 && pixel.y <= self.height
    }

    /// Camera-frame point at `depth` along the ray through `pixel`.
    pub fn back_project(&self, pixel: &Vector2<f64>, depth: f64) -> Vector3<f64> {
        Vector3::new(
            (pixel.x - self.cx) / self.fx * depth,
            (pixel.y - self.cy) / self.fy * depth,
            depth,
        )
    }
}

pub fn project(intr: &CameraIntrinsics, p_c: &Vector3<f64>) -> Option<Vector2<f64>> {
    if p_c.z <= MIN_DEPTH {
        return None;
    }
    Some(Vector2::new(
        intr.fx * p_c.x / p_c.z + intr.cx,
        intr.fy * p_c.y / p_c.z + intr.cy,
    ))
}

/// `∂π/∂p_c` at a camera-frame point in front of the camera.
fn projection_jacobian(intr: &CameraIntrinsics, p_c: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / p_c.z;
    Matrix2x3::new(
        intr.fx * iz,
        0.0,
        -intr.fx * p_c.x * iz * iz,
        0.0,
        intr.fy * iz,
        -intr.fy * p_c.y * iz * iz,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub id: u64,
    pub position: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFeature {
    pub landmark_id: u64,
    pub pixel: Vector2<f64>,
}

/// A pixel paired with the world position of the landmark it observes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraObservation {
    pub id: u64,
    pub landmark: Vector3<f64>,
    pub pixel: Vector2<f64>,
}

pub fn resolve_features(
    features: &[CameraFeature],
    landmarks: &[Landmark],
) -> Result<Vec<CameraObservation>, SensorError> {
    let index: std::collections::HashMap<u64, Vector3<f64>> =
        landmarks.iter().map(|l| (l.id, l.position)).collect();
    features
        .iter()
        .map(|f| {
            index
                .get(&f.landmark_id)
                .map(|&landmark| CameraObservation {
                    id: f.landmark_id,
                    landmark,
                    pixel: f.pixel,
                })
                .ok_or(SensorError::MissingLandmark(f.landmark_id))
        })
        .collect()
}

/// LiDAR point `z` (sensor frame) associated with the plane `{x : uᵀ(x - q) = 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub anchor: Vector3<f64>,
}

/// Tangent parametrisation the Jacobians are taken in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorConvention {
    /// `T ← exp(δ)·T` on SE(3).
    LeftInvariant,
    /// `R ← R·exp(δθ)`, `p ← p + δp`.
    BodyRotation,
}

/// Camera-frame coordinates of a world point seen from body pose `t`.
fn camera_point(t: &Pose, ext: &Pose, landmark: &Vector3<f64>) -> Vector3<f64> {
    let cam = t * ext;
    cam.rot.transpose() * (landmark - cam.trans)
}

/// `z - π(R_Cᵀ(p_f - p_C))` per feature, stacked.
pub fn camera_residual(
    t: &Pose,
    ext: &Pose,
    intr: &CameraIntrinsics,
    obs: &[CameraObservation],
) -> Result<DVector<f64>, SensorError> {
    let mut r = DVector::zeros(2 * obs.len());
    for (i, o) in obs.iter().enumerate() {
        let p_c = camera_point(t, ext, &o.landmark);
        let z = project(intr, &p_c).ok_or(SensorError::BehindCamera {
            id: o.id,
            depth: p_c.z,
        })?;
        r.fixed_rows_mut::<2>(2 * i).copy_from(&(o.pixel - z));
    }
    Ok(r)
}

/// `-∂r/∂ξ` for the camera residual, `2n × 9` with zero velocity columns.
pub fn camera_jacobian(
    t: &Pose,
    ext: &Pose,
    intr: &CameraIntrinsics,
    obs: &[CameraObservation],
) -> Result<DMatrix<f64>, SensorError> {
    let mut h = DMatrix::zeros(2 * obs.len(), 9);
    for (i, o) in obs.iter().enumerate() {
        let row = camera_row(t, ext, intr, o, ErrorConvention::LeftInvariant)
            .ok_or(SensorError::BehindCamera { id: o.id, depth: camera_point(t, ext, &o.landmark).z })?;
        h.view_mut((2 * i, 0), (2, 6)).copy_from(&row.1);
    }
    Ok(h)
}

/// Innovation and `2 × 6` Jacobian of one feature, or `None` if it is behind the camera.
fn camera_row(
    t: &Pose,
    ext: &Pose,
    intr: &CameraIntrinsics,
    o: &CameraObservation,
    conv: ErrorConvention,
) -> Option<(Vector2<f64>, nalgebra::Matrix2x6<f64>)> {
    let cam = t * ext;
    let rct = cam.rot.transpose();
    let p_c = rct * (o.landmark - cam.trans);
    let z = project(intr, &p_c)?;
    let dp = projection_jacobian(intr, &p_c);
    let (d_theta, d_pos) = match conv {
        ErrorConvention::LeftInvariant => (rct * hat(&o.landmark), -rct),
        ErrorConvention::BodyRotation => {
            let ric_t = ext.rot.transpose();
            (
                ric_t * hat(&(t.rot.transpose() * (o.landmark - t.trans))),
                -(ric_t * t.rot.transpose()),
            )
        }
    };
    let mut jac = nalgebra::Matrix2x6::zeros();
    jac.fixed_view_mut::<2, 3>(0, 0).copy_from(&(dp * d_theta));
    jac.fixed_view_mut::<2, 3>(0, 3).copy_from(&(dp * d_pos));
    Some((o.pixel - z, jac))
}

/// World-frame position of a LiDAR point seen from body pose `t`.
fn lidar_world_point(t: &Pose, ext: &Pose, point: &Vector3<f64>) -> Vector3<f64> {
    (t * ext).transform_point(point)
}

/// Point-to-plane distances `uᵀ(R_L z + p_L - q)`.
pub fn lidar_residual(t: &Pose, ext: &Pose, points: &[LidarPoint]) -> DVector<f64> {
    DVector::from_iterator(
        points.len(),
        points
            .iter()
            .map(|pt| pt.normal.dot(&(lidar_world_point(t, ext, &pt.point) - pt.anchor))),
    )
}

/// `∂r/∂ξ` of the point-to-plane residual, `n × 9` with zero velocity columns.
///
/// The innovation of a plane constraint is `0 - r`, so this is also `-∂y/∂ξ`.
pub fn lidar_jacobian(t: &Pose, ext: &Pose, points: &[LidarPoint]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(points.len(), 9);
    for (i, pt) in points.iter().enumerate() {
        let (_, row) = lidar_row(t, ext, pt, ErrorConvention::LeftInvariant);
        h.view_mut((i, 0), (1, 6)).copy_from(&row);
    }
    h
}

fn lidar_row(
    t: &Pose,
    ext: &Pose,
    pt: &LidarPoint,
    conv: ErrorConvention,
) -> (f64, nalgebra::RowVector6<f64>) {
    let world = lidar_world_point(t, ext, &pt.point);
    let ut: RowVector3<f64> = pt.normal.transpose();
    let d_theta: Matrix3<f64> = match conv {
        ErrorConvention::LeftInvariant => -hat(&world),
        ErrorConvention::BodyRotation => -(t.rot * hat(&ext.transform_point(&pt.point))),
    };
    let mut row = nalgebra::RowVector6::zeros();
    row.fixed_columns_mut::<3>(0).copy_from(&(ut * d_theta));
    row.fixed_columns_mut::<3>(3).copy_from(&ut);
    (-pt.normal.dot(&(world - pt.anchor)), row)
}

/// Sensor calibration shared by all filters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorRig {
    pub intrinsics: CameraIntrinsics,
    /// Camera pose in the IMU frame.
    pub camera_extrinsics: Pose,
    /// LiDAR pose in the IMU frame.
    pub lidar_extrinsics: Pose,
}

impl Default for SensorRig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default(),
            camera_extrinsics: Pose::identity(),
            lidar_extrinsics: Pose::identity(),
        }
    }
}

/// All features observed at one sensor timestamp.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementBatch {
    Camera(Vec<CameraObservation>),
    Lidar(Vec<LidarPoint>),
}

/// Stacked innovation `y` and `H = -∂y/∂δ` over the pose tangent `[θ; p]`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub innovation: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// Features skipped because they fell behind the camera.
    pub dropped: usize,
}

impl Linearization {
    pub fn rows(&self) -> usize {
        self.innovation.len()
    }
}

impl MeasurementBatch {
    /// Number of features (not rows).
    pub fn len(&self) -> usize {
        match self {
            Self::Camera(o) => o.len(),
            Self::Lidar(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Residual rows contributed by each feature.
    pub fn rows_per_feature(&self) -> usize {
        match self {
            Self::Camera(_) => 2,
            Self::Lidar(_) => 1,
        }
    }

    pub fn extrinsics(&self, rig: &SensorRig) -> Pose {
        match self {
            Self::Camera(_) => rig.camera_extrinsics,
            Self::Lidar(_) => rig.lidar_extrinsics,
        }
    }

    pub fn linearize(&self, rig: &SensorRig, t: &Pose, conv: ErrorConvention) -> Linearization {
        match self {
            Self::Camera(obs) => {
                let ext = rig.camera_extrinsics;
                let mut y = Vec::with_capacity(2 * obs.len());
                let mut rows: Vec<nalgebra::Matrix2x6<f64>> = Vec::with_capacity(obs.len());
                let mut dropped = 0;
                for o in obs {
                    match camera_row(t, &ext, &rig.intrinsics, o, conv) {
                        Some((r, j)) => {
                            y.push(r.x);
                            y.push(r.y);
                            rows.push(j);
                        }
                        None => dropped += 1,
                    }
                }
                let mut h = DMatrix::zeros(y.len(), 6);
                for (i, j) in rows.iter().enumerate() {
                    h.fixed_view_mut::<2, 6>(2 * i, 0).copy_from(j);
                }
                Linearization {
                    innovation: DVector::from_vec(y),
                    jacobian: h,
                    dropped,
                }
            }
            Self::Lidar(points) => {
                let ext = rig.lidar_extrinsics;
                let mut y = DVector::zeros(points.len());
                let mut h = DMatrix::zeros(points.len(), 6);
                for (i, pt) in points.iter().enumerate() {
                    let (r, j) = lidar_row(t, &ext, pt, conv);
                    y[i] = r;
                    h.fixed_view_mut::<1, 6>(i, 0).copy_from(&j);
                }
                Linearization {
                    innovation: y,
                    jacobian: h,
                    dropped: 0,
                }
            }
        }
    }
}
