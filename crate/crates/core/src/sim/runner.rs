use super::config::{ScenarioConfig, ScenarioError, SweepAxis};
use super::synth::{synthesize_trial, TrialData};
use crate::filter::{Filter, FilterVariant, InitialCondition, UpdatePath};
use crate::lie::{rotation_angle, rotation_from_rpy, ExtendedPose};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::Instant;

/// Errors of one filter over one trial, sampled after each update.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace {
    pub variant: FilterVariant,
    pub orientation_deg: Vec<f64>,
    pub position_m: Vec<f64>,
    /// Wall-clock update time; not reproducible.
    pub update_ms: Vec<f64>,
    pub diverged: bool,
    /// Updates that took the consistent-initialisation path.
    pub consistent_updates: usize,
    pub iterations: usize,
}

impl FilterTrace {
    pub fn final_position_error(&self) -> Option<f64> {
        if self.diverged {
            None
        } else {
            self.position_m.last().copied()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub times: Vec<f64>,
    pub initial_position_error: f64,
    pub initial_orientation_error_deg: f64,
    pub filters: Vec<FilterTrace>,
}

impl TrialResult {
    pub fn trace(&self, variant: FilterVariant) -> Option<&FilterTrace> {
        self.filters.iter().find(|f| f.variant == variant)
    }
}

/// Generator for trial `trial`: one ChaCha stream per trial under the master seed.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Truth with the configured deviation applied: `R̂ = R_dev R`, `p̂ = p + δp`.
pub fn initial_condition(cfg: &ScenarioConfig, truth: &ExtendedPose) -> InitialCondition {
    let s = cfg.init.scale;
    let [r, p, y] = cfg.init.rpy;
    let r_dev = rotation_from_rpy(s * r, s * p, s * y);
    let mean = ExtendedPose::new(
        r_dev * truth.rot,
        truth.pos + Vector3::from(cfg.init.position) * s,
        truth.vel,
    );
    InitialCondition {
        mean,
        std_rot: cfg.init.std_rot,
        std_pos: cfg.init.std_pos,
        std_vel: cfg.init.std_vel,
        std_bias_gyro: cfg.init.std_bias_gyro,
        std_bias_accel: cfg.init.std_bias_accel,
    }
}

fn errors(est: &ExtendedPose, truth: &ExtendedPose) -> (f64, f64) {
    let angle = rotation_angle(&(est.rot.transpose() * truth.rot));
    (angle.to_degrees(), (est.pos - truth.pos).norm())
}

pub fn run_filter(
    variant: FilterVariant,
    cfg: &ScenarioConfig,
    data: &TrialData,
    init: &InitialCondition,
) -> FilterTrace {
    let mut filter = Filter::new(variant, init, cfg.filter_config());
    let per_frame = cfg.imu_per_frame();
    let frames = data.frames.len();
    let mut trace = FilterTrace {
        variant,
        orientation_deg: Vec::with_capacity(frames),
        position_m: Vec::with_capacity(frames),
        update_ms: Vec::with_capacity(frames),
        diverged: false,
        consistent_updates: 0,
        iterations: 0,
    };
    for (j, batch) in data.frames.iter().enumerate() {
        let lo = (j * per_frame).min(data.imu.len());
        let hi = ((j + 1) * per_frame).min(data.imu.len());
        let t_end = data.frame_times[j];
        let step = filter.predict(&data.imu[lo..hi], t_end).and_then(|()| {
            let start = Instant::now();
            let report = filter.update(batch)?;
            Ok((report, start.elapsed().as_secs_f64() * 1e3))
        });
        match step {
            Ok((report, ms)) => {
                trace.update_ms.push(ms);
                trace.iterations += report.iterations;
                if report.path == UpdatePath::ConsistentInit {
                    trace.consistent_updates += 1;
                }
            }
            Err(e) => {
                log::debug!("{variant} failed at t={t_end}: {e}");
                trace.diverged = true;
                break;
            }
        }
        let (rot, pos) = errors(&filter.estimate(), &data.truth[j]);
        trace.orientation_deg.push(rot);
        trace.position_m.push(pos);
        if !(pos <= cfg.divergence_threshold) {
            trace.diverged = true;
            break;
        }
    }
    trace
}

/// One trial: data drawn once and shared by every requested filter.
pub fn run_trial(cfg: &ScenarioConfig, trial: usize) -> TrialResult {
    let mut rng = trial_rng(cfg.seed, trial);
    let data = synthesize_trial(cfg, &mut rng);
    let init = initial_condition(cfg, &data.initial_truth);
    let (rot0, pos0) = errors(&init.mean, &data.initial_truth);
    let filters = cfg.filters.iter().map(|&v| run_filter(v, cfg, &data, &init)).collect();
    TrialResult {
        trial,
        times: data.frame_times,
        initial_position_error: pos0,
        initial_orientation_error_deg: rot0,
        filters,
    }
}

/// All trials of a scenario, in trial order regardless of scheduling.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<TrialResult>, ScenarioError> {
    cfg.validate()?;
    Ok((0..cfg.trials).into_par_iter().map(|k| run_trial(cfg, k)).collect())
}

/// Runs every sweep value; a config without a sweep yields one group at `NaN`.
pub fn run_sweep(cfg: &ScenarioConfig) -> Result<Vec<(f64, Vec<TrialResult>)>, ScenarioError> {
    cfg.validate()?;
    if cfg.sweep.axis == SweepAxis::None {
        return Ok(vec![(f64::NAN, run_scenario(cfg)?)]);
    }
    cfg.sweep
        .values
        .iter()
        .map(|&v| Ok((v, run_scenario(&cfg.with_sweep_value(v))?)))
        .collect()
}
