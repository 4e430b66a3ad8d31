//! Result files written by `run`.

use eikf::filter::FilterVariant;
use eikf::sim::{rmse, summarize_sweep, Quantity, ScenarioConfig, TrialResult};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const QUANTITIES: [Quantity; 2] = [Quantity::OrientationDeg, Quantity::PositionM];

pub const SWEEP_HEADER: [&str; 5] = ["sweep_value", "filter", "avg_rmse_orient_deg", "avg_rmse_pos_m", "avg_update_ms"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    /// `None` for runs without a sweep.
    pub sweep_value: Option<f64>,
    pub filter: FilterVariant,
    /// `None` when every trial diverged.
    pub avg_rmse_orientation_deg: Option<f64>,
    pub avg_rmse_position_m: Option<f64>,
    pub diverged_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub summary: Vec<FilterSummary>,
    pub outputs: Vec<PathBuf>,
    pub config: ScenarioConfig,
}

pub fn rmse_file_name(q: Quantity) -> String {
    format!("rmse_{}.csv", q.label())
}

/// Header of `rmse_<quantity>.csv`; sweep runs get a leading `sweep_value` column.
pub fn rmse_header(filters: &[FilterVariant], sweep: bool) -> Vec<String> {
    let mut h: Vec<String> = Vec::new();
    if sweep {
        h.push("sweep_value".into());
    }
    h.push("t".into());
    h.extend(filters.iter().map(|f| f.name().to_string()));
    h
}

fn csv_err(e: csv::Error) -> String {
    e.to_string()
}

pub fn write_rmse(
    path: &Path,
    q: Quantity,
    groups: &[(f64, Vec<TrialResult>)],
    filters: &[FilterVariant],
    sweep: bool,
) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(rmse_header(filters, sweep)).map_err(csv_err)?;
    for (value, results) in groups {
        let times = results.first().map(|r| r.times.clone()).unwrap_or_default();
        let series: Vec<Option<Vec<f64>>> = filters.iter().map(|&f| rmse(results, f, q).ok().map(|r| r.series)).collect();
        for (k, t) in times.iter().enumerate() {
            let mut rec = Vec::with_capacity(filters.len() + 2);
            if sweep {
                rec.push(value.to_string());
            }
            rec.push(t.to_string());
            for s in &series {
                rec.push(s.as_ref().map_or(f64::NAN, |s| s[k]).to_string());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| e.to_string())
}

pub fn write_sweep(path: &Path, groups: &[(f64, Vec<TrialResult>)], filters: &[FilterVariant]) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for row in summarize_sweep(groups, filters) {
        w.write_record([
            row.sweep_value.to_string(),
            row.filter.name().to_string(),
            row.avg_rmse_orient_deg.to_string(),
            row.avg_rmse_pos_m.to_string(),
            row.avg_update_ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| e.to_string())
}

pub fn summarize(groups: &[(f64, Vec<TrialResult>)], filters: &[FilterVariant], sweep: bool) -> Vec<FilterSummary> {
    let mut out = Vec::new();
    for (value, results) in groups {
        for &f in filters {
            let avg = |q| rmse(results, f, q).ok().map(|r| r.average);
            out.push(FilterSummary {
                sweep_value: sweep.then_some(*value),
                filter: f,
                avg_rmse_orientation_deg: avg(Quantity::OrientationDeg),
                avg_rmse_position_m: avg(Quantity::PositionM),
                diverged_trials: results
                    .iter()
                    .filter(|r| r.trace(f).is_some_and(|t| t.diverged))
                    .count(),
            });
        }
    }
    out
}
