//! Monte-Carlo simulation of inertial odometry with a camera or a LiDAR.

mod config;
mod metrics;
mod runner;
mod synth;
mod trajectory;

pub use config::{
    ExtrinsicSpec, InitSpec, PlacementSpec, ScenarioConfig, ScenarioError, SensorKind, SweepAxis, SweepSpec,
};
pub use metrics::{mean_update_ms, rmse, rmse_of, summarize_sweep, Quantity, RmseSeries, SweepRow};
pub use runner::{
    initial_condition, run_filter, run_scenario, run_sweep, run_trial, trial_rng, FilterTrace, TrialResult,
};
pub use synth::{synthesize_camera, synthesize_imu, synthesize_lidar, synthesize_trial, TrialData};
pub use trajectory::{ground_truth, LateralShape, TrajectorySpec, TruthSample};
