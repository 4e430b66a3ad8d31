use super::trajectory::TrajectorySpec;
use crate::filter::{FilterConfig, FilterVariant, UpdateConfig};
use crate::gaussian::{BiasModel, NoiseParams, PropagationOrder, GRAVITY};
use crate::lie::{rotation_from_rpy, Pose};
use crate::sensors::{CameraIntrinsics, SensorRig};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("every trial diverged")]
    AllDiverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    #[default]
    Camera,
    Lidar,
}

/// Sensor mounting as roll, pitch, yaw and translation in the IMU frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtrinsicSpec {
    pub rpy: [f64; 3],
    pub translation: [f64; 3],
}

impl ExtrinsicSpec {
    pub fn pose(&self) -> Pose {
        let [r, p, y] = self.rpy;
        Pose::new(rotation_from_rpy(r, p, y), Vector3::from(self.translation))
    }
}

/// How features are laid out around the sensor at each frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementSpec {
    /// Camera landmark depth range, m.
    pub camera_depth: [f64; 2],
    /// LiDAR return range, m.
    pub lidar_range: [f64; 2],
    /// Smallest allowed `|cos|` between a plane normal and its beam.
    pub min_incidence: f64,
    /// Largest distance from a point to its plane anchor, m.
    pub anchor_spread: f64,
}

impl Default for PlacementSpec {
    fn default() -> Self {
        Self {
            camera_depth: [5.0, 40.0],
            lidar_range: [5.0, 50.0],
            min_incidence: 0.2,
            anchor_spread: 1.0,
        }
    }
}

/// Initial estimate error and the prior the filters start from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitSpec {
    /// Position deviation, m.
    pub position: [f64; 3],
    /// Attitude deviation as roll, pitch, yaw.
    pub rpy: [f64; 3],
    /// Multiplies both deviations.
    pub scale: f64,
    pub std_rot: f64,
    pub std_pos: f64,
    pub std_vel: f64,
    pub std_bias_gyro: f64,
    pub std_bias_accel: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            position: [0.5, 0.5, 0.5],
            rpy: [FRAC_PI_6, FRAC_PI_6, -FRAC_PI_6],
            scale: 1.0,
            std_rot: FRAC_PI_6,
            std_pos: 0.5,
            std_vel: 0.1,
            std_bias_gyro: 1e-3,
            std_bias_accel: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[default]
    None,
    Landmarks,
    Noise,
    InitScale,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub sensor: SensorKind,
    /// Seconds.
    pub duration: f64,
    pub imu_rate: f64,
    pub camera_rate: f64,
    pub lidar_rate: f64,
    pub trajectory: TrajectorySpec,
    /// Features per sensor frame.
    pub landmarks: usize,
    pub placement: PlacementSpec,
    pub imu_noise: NoiseParams,
    /// Pixel noise standard deviation.
    pub sigma_camera: f64,
    /// LiDAR point noise standard deviation, m.
    pub sigma_lidar: f64,
    pub intrinsics: CameraIntrinsics,
    pub camera_extrinsics: ExtrinsicSpec,
    pub lidar_extrinsics: ExtrinsicSpec,
    pub init: InitSpec,
    pub filters: Vec<FilterVariant>,
    pub update: UpdateConfig,
    pub propagation: PropagationOrder,
    pub bias_model: BiasModel,
    pub trials: usize,
    pub seed: u64,
    pub sweep: SweepSpec,
    /// Position error beyond which a trial counts as diverged, m.
    pub divergence_threshold: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::vio()
    }
}

impl ScenarioConfig {
    pub fn vio() -> Self {
        Self {
            name: "vio".into(),
            sensor: SensorKind::Camera,
            duration: 30.0,
            imu_rate: 100.0,
            camera_rate: 20.0,
            lidar_rate: 50.0,
            trajectory: TrajectorySpec::default(),
            landmarks: 100,
            placement: PlacementSpec::default(),
            imu_noise: NoiseParams::default(),
            sigma_camera: 1.0,
            sigma_lidar: 0.2,
            intrinsics: CameraIntrinsics::default(),
            camera_extrinsics: ExtrinsicSpec::default(),
            lidar_extrinsics: ExtrinsicSpec::default(),
            init: InitSpec::default(),
            filters: vec![
                FilterVariant::Iekf,
                FilterVariant::InEkf,
                FilterVariant::EikfC,
                FilterVariant::EikfI,
            ],
            update: UpdateConfig::default(),
            propagation: PropagationOrder::Fourth,
            bias_model: BiasModel::Coupled,
            trials: 25,
            seed: 0,
            sweep: SweepSpec::default(),
            divergence_threshold: 1e3,
        }
    }

    pub fn lio() -> Self {
        Self {
            name: "lio".into(),
            sensor: SensorKind::Lidar,
            landmarks: 400,
            ..Self::vio()
        }
    }

    pub fn sensor_rate(&self) -> f64 {
        match self.sensor {
            SensorKind::Camera => self.camera_rate,
            SensorKind::Lidar => self.lidar_rate,
        }
    }

    /// IMU samples between consecutive sensor frames.
    pub fn imu_per_frame(&self) -> usize {
        (self.imu_rate / self.sensor_rate()).round() as usize
    }

    pub fn rig(&self) -> SensorRig {
        SensorRig {
            intrinsics: self.intrinsics,
            camera_extrinsics: self.camera_extrinsics.pose(),
            lidar_extrinsics: self.lidar_extrinsics.pose(),
        }
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            imu: self.imu_noise,
            gravity: GRAVITY,
            propagation: self.propagation,
            bias_model: self.bias_model,
            update: self.update,
            rig: self.rig(),
            sigma_camera: self.sigma_camera,
            sigma_lidar: self.sigma_lidar,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |m: &str| Err(ScenarioError::Config(m.into()));
        let positive = [self.duration, self.imu_rate, self.camera_rate, self.lidar_rate];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return err("duration and rates must be positive");
        }
        let ratio = self.imu_rate / self.sensor_rate();
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return err("sensor rate must divide the IMU rate");
        }
        if self.trials == 0 {
            return err("trials must be at least 1");
        }
        if self.filters.is_empty() {
            return err("no filters requested");
        }
        if self.update.max_iterations == 0 {
            return err("update.max_iterations must be at least 1");
        }
        if !(self.update.tolerance > 0.0) {
            return err("update.tolerance must be positive");
        }
        if self.sigma_camera < 0.0 || self.sigma_lidar < 0.0 {
            return err("measurement noise must be nonnegative");
        }
        let [d0, d1] = self.placement.camera_depth;
        let [r0, r1] = self.placement.lidar_range;
        if !(0.1 < d0 && d0 <= d1 && 0.1 < r0 && r0 <= r1) {
            return err("placement ranges must be increasing and beyond 0.1 m");
        }
        if self.sweep.axis != SweepAxis::None && self.sweep.values.is_empty() {
            return err("sweep axis set without values");
        }
        Ok(())
    }

    /// Copy with one sweep coordinate applied.
    pub fn with_sweep_value(&self, value: f64) -> Self {
        let mut c = self.clone();
        match self.sweep.axis {
            SweepAxis::None => {}
            SweepAxis::Landmarks => c.landmarks = value.round() as usize,
            SweepAxis::Noise => match c.sensor {
                SensorKind::Camera => c.sigma_camera = value,
                SensorKind::Lidar => c.sigma_lidar = value,
            },
            SweepAxis::InitScale => c.init.scale = value,
        }
        c.sweep = SweepSpec::default();
        c
    }
}
