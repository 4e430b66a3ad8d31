use super::config::ScenarioError;
use super::runner::TrialResult;
use crate::filter::FilterVariant;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    OrientationDeg,
    PositionM,
}

impl Quantity {
    pub fn label(self) -> &'static str {
        match self {
            Self::OrientationDeg => "orientation_deg",
            Self::PositionM => "position_m",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseSeries {
    /// RMSE across trials at each update instant.
    pub series: Vec<f64>,
    /// Mean of `series`.
    pub average: f64,
    pub trials_used: usize,
}

/// Pointwise RMSE over equally long error traces.
pub fn rmse_of(traces: &[&[f64]]) -> Result<RmseSeries, ScenarioError> {
    let Some(first) = traces.first() else {
        return Err(ScenarioError::AllDiverged);
    };
    let len = first.len();
    let mut series = vec![0.0; len];
    for t in traces {
        for (acc, e) in series.iter_mut().zip(t.iter()) {
            *acc += e * e;
        }
    }
    let k = traces.len() as f64;
    for v in series.iter_mut() {
        *v = (*v / k).sqrt();
    }
    let average = if len == 0 { 0.0 } else { series.iter().sum::<f64>() / len as f64 };
    Ok(RmseSeries {
        series,
        average,
        trials_used: traces.len(),
    })
}

/// RMSE of one filter over the trials where it did not diverge.
pub fn rmse(results: &[TrialResult], variant: FilterVariant, quantity: Quantity) -> Result<RmseSeries, ScenarioError> {
    let traces: Vec<&[f64]> = results
        .iter()
        .filter_map(|r| r.trace(variant))
        .filter(|f| !f.diverged)
        .map(|f| match quantity {
            Quantity::OrientationDeg => f.orientation_deg.as_slice(),
            Quantity::PositionM => f.position_m.as_slice(),
        })
        .collect();
    rmse_of(&traces)
}

/// Mean wall-clock update time over every update of every trial.
pub fn mean_update_ms(results: &[TrialResult], variant: FilterVariant) -> f64 {
    let (sum, count) = results
        .iter()
        .filter_map(|r| r.trace(variant))
        .flat_map(|f| f.update_ms.iter())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub filter: FilterVariant,
    pub avg_rmse_orient_deg: f64,
    pub avg_rmse_pos_m: f64,
    pub avg_update_ms: f64,
}

/// One row per sweep value and filter; all-diverged cells carry `NaN`.
pub fn summarize_sweep(groups: &[(f64, Vec<TrialResult>)], filters: &[FilterVariant]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for (value, results) in groups {
        for &f in filters {
            let avg = |q| rmse(results, f, q).map_or(f64::NAN, |r| r.average);
            rows.push(SweepRow {
                sweep_value: *value,
                filter: f,
                avg_rmse_orient_deg: avg(Quantity::OrientationDeg),
                avg_rmse_pos_m: avg(Quantity::PositionM),
                avg_update_ms: mean_update_ms(results, f),
            });
        }
    }
    rows
}
