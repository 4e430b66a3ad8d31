//! Update-step timing against batch size.

use crate::filter::{Filter, FilterVariant, InitialCondition};
use crate::lie::{ExtendedPose, Vector9};
use crate::sim::{synthesize_camera, synthesize_lidar, trial_rng, ScenarioConfig, ScenarioError, SensorKind};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n_list: Vec<usize>,
    pub sensor: SensorKind,
    pub reps: usize,
    pub variants: Vec<FilterVariant>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_list: vec![1_000, 10_000, 100_000],
            sensor: SensorKind::Camera,
            reps: 7,
            variants: vec![FilterVariant::EikfC, FilterVariant::Iekf],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub variant: FilterVariant,
    pub median_ms: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median wall-clock time of one measurement update per batch size and variant.
///
/// The prior sits a small, fixed perturbation away from the pose the batch
/// was generated at.
pub fn bench_update(cfg: &BenchConfig) -> Result<Vec<BenchRow>, ScenarioError> {
    if cfg.n_list.is_empty() || cfg.reps == 0 {
        return Err(ScenarioError::Config("bench needs at least one size and one repetition".into()));
    }
    if cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ScenarioError::Config("n_list must be strictly ascending".into()));
    }
    let scenario = match cfg.sensor {
        SensorKind::Camera => ScenarioConfig::vio(),
        SensorKind::Lidar => ScenarioConfig::lio(),
    };
    let rig = scenario.rig();
    let truth = scenario.trajectory.ground_truth(1.0).state;
    let offset = Vector9::from_column_slice(&[0.02, -0.01, 0.015, 0.1, -0.05, 0.08, 0.0, 0.0, 0.0]);
    let init = InitialCondition {
        mean: ExtendedPose::exp(&offset) * truth,
        std_rot: 0.05,
        std_pos: 0.2,
        std_vel: 0.1,
        std_bias_gyro: 1e-3,
        std_bias_accel: 1e-3,
    };
    let mut rows = Vec::new();
    for (k, &n) in cfg.n_list.iter().enumerate() {
        let mut rng = trial_rng(cfg.seed, k);
        let body = truth.pose();
        let batch = match cfg.sensor {
            SensorKind::Camera => synthesize_camera(
                &body,
                &rig.camera_extrinsics,
                &rig.intrinsics,
                &scenario.placement,
                n,
                scenario.sigma_camera,
                &mut rng,
            ),
            SensorKind::Lidar => {
                synthesize_lidar(&body, &rig.lidar_extrinsics, &scenario.placement, n, scenario.sigma_lidar, &mut rng)
            }
        };
        for &variant in &cfg.variants {
            let template = Filter::new(variant, &init, scenario.filter_config());
            let mut times = Vec::with_capacity(cfg.reps);
            for _ in 0..cfg.reps {
                let mut f = template.clone();
                let start = Instant::now();
                f.update(&batch)
                    .map_err(|e| ScenarioError::Config(format!("{variant} update failed at n={n}: {e}")))?;
                times.push(start.elapsed().as_secs_f64() * 1e3);
            }
            rows.push(BenchRow {
                n,
                variant,
                median_ms: median(times),
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`; `NaN` with fewer than two points.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Fitted exponent of `variant` over the rows.
pub fn fitted_exponent(rows: &[BenchRow], variant: FilterVariant) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.variant == variant)
        .map(|r| (r.n as f64, r.median_ms))
        .unzip();
    loglog_slope(&xs, &ys)
}
