//! Filters on SE₂(3) and the error-state baselines they are compared with.
//!
//! All variants share the same IMU mean integration and measurement models.
//! They differ in how the error is parametrised and where the measurement is
//! linearised:
//!
//! | variant  | error                 | linearisation                                  |
//! |----------|-----------------------|------------------------------------------------|
//! | `EKF`    | body rotation, vector | prior mean, one step                           |
//! | `IEKF`   | body rotation, vector | iterated from the prior mean                   |
//! | `InEKF`  | right-invariant       | prior mean, one step                           |
//! | `EIKF-I` | right-invariant       | iterated from the prior mean                   |
//! | `EIKF-C` | right-invariant       | consistent pose for large batches, else `EIKF-I` |

mod baseline;
mod fusion;
mod invariant;

pub use baseline::{error_state_predict, error_state_update, ErrorStateBelief};
pub use fusion::{
    fisher_information, fused_map_closed_form, fused_map_with_virtual_pose, mle_pose, FusionProblem,
};
pub use invariant::{eikf_update, iterated_update, practical_eikf_step, predict};

use crate::consistent::ConsistentError;
use crate::gaussian::{BeliefState, BiasModel, Matrix15, NoiseParams, PropagationOrder, GRAVITY};
use crate::lie::{hat, ExtendedPose, LieError};
use crate::sensors::{ImuSample, MeasurementBatch, SensorError, SensorRig};
use crate::sensors::Linearization;
use nalgebra::{Matrix3, Matrix6, SMatrix, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("IMU window is empty")]
    EmptyWindow,
    #[error("IMU timestamps must increase (got {prev} then {next})")]
    NonMonotonicTime { prev: f64, next: f64 },
    #[error("measurement batch has no usable features")]
    EmptyBatch,
    #[error("error left the logarithm's domain: {0}")]
    LogDomain(#[from] LieError),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error(transparent)]
    Consistent(#[from] ConsistentError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterVariant {
    #[serde(rename = "EKF")]
    Ekf,
    #[serde(rename = "IEKF")]
    Iekf,
    #[serde(rename = "InEKF")]
    InEkf,
    #[serde(rename = "EIKF-I")]
    EikfI,
    #[serde(rename = "EIKF-C")]
    EikfC,
}

impl FilterVariant {
    pub const ALL: [FilterVariant; 5] = [Self::Ekf, Self::Iekf, Self::InEkf, Self::EikfI, Self::EikfC];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ekf => "EKF",
            Self::Iekf => "IEKF",
            Self::InEkf => "InEKF",
            Self::EikfI => "EIKF-I",
            Self::EikfC => "EIKF-C",
        }
    }

    pub fn is_invariant(self) -> bool {
        matches!(self, Self::InEkf | Self::EikfI | Self::EikfC)
    }
}

impl fmt::Display for FilterVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown filter variant {s:?}"))
    }
}

/// Objective monitored by the iterated update's stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostForm {
    /// `δᵀ(JᵀP̄⁻¹J)⁻¹δ + rᵀΣ⁻¹r`.
    #[default]
    Printed,
    /// `δᵀP̄⁻¹δ + rᵀΣ⁻¹r`.
    Map,
}

/// Noise level used by the consistent-initialisation update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaSource {
    /// `σ̂` estimated from the batch itself.
    #[default]
    Estimated,
    /// The configured sensor noise.
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdateConfig {
    /// Maximum number of iterations `l_max`.
    pub max_iterations: usize,
    /// Stop once successive costs differ by at most this much.
    pub tolerance: f64,
    /// Batches with more features than this use the consistent initialisation.
    pub consistent_threshold: usize,
    pub cost: CostForm,
    pub sigma_source: SigmaSource,
    /// Lower bound on `σ̂` so a perfect fit does not zero the measurement covariance.
    pub sigma_floor: f64,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            max_iterations: 3,
            tolerance: 1e-6,
            consistent_threshold: 50,
            cost: CostForm::Printed,
            sigma_source: SigmaSource::Estimated,
            sigma_floor: 1e-3,
        }
    }
}

/// Everything a filter needs besides its belief.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub imu: NoiseParams,
    pub gravity: Vector3<f64>,
    pub propagation: PropagationOrder,
    /// Bias treatment of the invariant filters.
    pub bias_model: BiasModel,
    pub update: UpdateConfig,
    pub rig: SensorRig,
    pub sigma_camera: f64,
    pub sigma_lidar: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            imu: NoiseParams::default(),
            gravity: GRAVITY,
            propagation: PropagationOrder::Fourth,
            bias_model: BiasModel::Coupled,
            update: UpdateConfig::default(),
            rig: SensorRig::default(),
            sigma_camera: 1.0,
            sigma_lidar: 0.2,
        }
    }
}

impl FilterConfig {
    pub fn nominal_sigma(&self, batch: &MeasurementBatch) -> f64 {
        match batch {
            MeasurementBatch::Camera(_) => self.sigma_camera,
            MeasurementBatch::Lidar(_) => self.sigma_lidar,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum UpdatePath {
    /// Iterations started at the prior mean.
    Iterated,
    /// One step from the consistent pose.
    ConsistentInit,
    /// The consistent solver failed and the iterated path ran instead.
    ConsistentFallback,
    /// No features; the belief is the prediction.
    PredictOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub path: UpdatePath,
    pub iterations: usize,
    /// Cost at each linearisation point, starting with the initial one.
    pub costs: Vec<f64>,
    /// Last entry of `costs`.
    pub final_cost: f64,
    /// Frobenius norm of the last `K H J⁻¹`.
    pub gain_norm: f64,
    pub features_used: usize,
    pub features_dropped: usize,
    /// Measurement standard deviation the gain was computed with.
    pub sigma: f64,
}

impl UpdateReport {
    pub fn predict_only() -> Self {
        Self {
            path: UpdatePath::PredictOnly,
            iterations: 0,
            costs: Vec::new(),
            final_cost: 0.0,
            gain_norm: 0.0,
            features_used: 0,
            features_dropped: 0,
            sigma: f64::NAN,
        }
    }
}

/// Initial estimate with independent per-axis uncertainties.
///
/// Rotation uncertainty is about world axes; it is mapped into each
/// filter's own error coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCondition {
    pub mean: ExtendedPose,
    pub std_rot: f64,
    pub std_pos: f64,
    pub std_vel: f64,
    pub std_bias_gyro: f64,
    pub std_bias_accel: f64,
}

impl InitialCondition {
    fn diag(&self) -> Matrix15 {
        let mut p = Matrix15::zeros();
        let s = [self.std_rot, self.std_pos, self.std_vel, self.std_bias_gyro, self.std_bias_accel];
        for (k, sd) in s.iter().enumerate() {
            for i in 0..3 {
                p[(3 * k + i, 3 * k + i)] = sd * sd;
            }
        }
        p
    }

    /// Belief in right-invariant coordinates: `ρ_p = δp + p̂^δθ`, `ρ_v = δv + v̂^δθ`.
    pub fn invariant_belief(&self) -> BeliefState {
        let mut t = Matrix15::identity();
        t.fixed_view_mut::<3, 3>(3, 0).copy_from(&hat(&self.mean.pos));
        t.fixed_view_mut::<3, 3>(6, 0).copy_from(&hat(&self.mean.vel));
        BeliefState::new(self.mean, t * self.diag() * t.transpose())
    }

    /// Belief in body-rotation error coordinates: `δθ_b = R̂ᵀδθ`.
    pub fn error_state_belief(&self) -> ErrorStateBelief {
        let mut t = Matrix15::identity();
        let rt: Matrix3<f64> = self.mean.rot.transpose();
        t.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        ErrorStateBelief::new(self.mean, t * self.diag() * t.transpose())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum FilterState {
    Invariant(BeliefState),
    ErrorState(ErrorStateBelief),
}

/// A filter variant bundled with its belief.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub variant: FilterVariant,
    pub config: FilterConfig,
    state: FilterState,
}

impl Filter {
    pub fn new(variant: FilterVariant, init: &InitialCondition, config: FilterConfig) -> Self {
        let state = if variant.is_invariant() {
            FilterState::Invariant(init.invariant_belief())
        } else {
            FilterState::ErrorState(init.error_state_belief())
        };
        Self { variant, config, state }
    }

    pub fn estimate(&self) -> ExtendedPose {
        match &self.state {
            FilterState::Invariant(b) => b.mean,
            FilterState::ErrorState(b) => b.mean,
        }
    }

    pub fn covariance(&self) -> Matrix15 {
        match &self.state {
            FilterState::Invariant(b) => b.cov,
            FilterState::ErrorState(b) => b.cov,
        }
    }

    pub fn predict(&mut self, window: &[ImuSample], t_end: f64) -> Result<(), FilterError> {
        match &mut self.state {
            FilterState::Invariant(b) => *b = predict(b, window, t_end, &self.config)?,
            FilterState::ErrorState(b) => *b = error_state_predict(b, window, t_end, &self.config)?,
        }
        Ok(())
    }

    pub fn update(&mut self, batch: &MeasurementBatch) -> Result<UpdateReport, FilterError> {
        if batch.is_empty() {
            return Ok(UpdateReport::predict_only());
        }
        let cfg = &self.config;
        let sigma = cfg.nominal_sigma(batch);
        let (next, report) = match (&self.state, self.variant) {
            (FilterState::ErrorState(b), FilterVariant::Ekf) => {
                let (nb, r) = error_state_update(b, batch, sigma, 1, cfg)?;
                (FilterState::ErrorState(nb), r)
            }
            (FilterState::ErrorState(b), _) => {
                let (nb, r) = error_state_update(b, batch, sigma, cfg.update.max_iterations, cfg)?;
                (FilterState::ErrorState(nb), r)
            }
            (FilterState::Invariant(b), FilterVariant::InEkf) => {
                let (nb, r) = iterated_update(b, batch, &b.mean, sigma, 1, cfg)?;
                (FilterState::Invariant(nb), r)
            }
            (FilterState::Invariant(b), FilterVariant::EikfI) => {
                let (nb, r) = iterated_update(b, batch, &b.mean, sigma, cfg.update.max_iterations, cfg)?;
                (FilterState::Invariant(nb), r)
            }
            (FilterState::Invariant(b), _) => {
                let (nb, r) = practical_eikf_step(b, batch, cfg)?;
                (FilterState::Invariant(nb), r)
            }
        };
        self.state = next;
        Ok(report)
    }
}

/// `HᵀH` and `Hᵀy` of a stacked linearisation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NormalEquations {
    pub hth: Matrix6<f64>,
    pub hty: Vector6<f64>,
    pub yty: f64,
}

impl NormalEquations {
    pub fn new(lin: &Linearization) -> Self {
        let h = &lin.jacobian;
        let hth = h.tr_mul(h);
        let hty = h.tr_mul(&lin.innovation);
        Self {
            hth: Matrix6::from_iterator(hth.iter().cloned()),
            hty: Vector6::from_iterator(hty.iter().cloned()),
            yty: lin.innovation.norm_squared(),
        }
    }
}

/// Gain in information form.
///
/// With `B = H L` and `Λ = BᵀB/σ²` the Kalman gain is `K = G Bᵀ/σ²` and
/// `K B = G Λ`, where `G = P̄(ΛP̄ + I)⁻¹`. Only 15×15 systems are factorised,
/// so the cost is linear in the number of rows.
pub(crate) fn information_gain(
    p_bar: &Matrix15,
    l: &SMatrix<f64, 6, 15>,
    hth: &Matrix6<f64>,
    sigma: f64,
) -> Result<(Matrix15, Matrix15), FilterError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(FilterError::NumericalFailure(format!("measurement sigma {sigma}")));
    }
    let lambda = l.transpose() * hth * l / (sigma * sigma);
    if !lambda.iter().chain(p_bar.iter()).all(|v| v.is_finite()) {
        return Err(FilterError::NumericalFailure("non-finite information or covariance".into()));
    }
    // (P̄Λ + I)ᵀ = ΛP̄ + I, so Gᵀ = (P̄Λ + I)⁻¹P̄.
    let m = p_bar * lambda + Matrix15::identity();
    let gt = m
        .lu()
        .solve(p_bar)
        .ok_or_else(|| FilterError::NumericalFailure("singular innovation system".into()))?;
    let g = gt.transpose();
    if !g.iter().all(|v| v.is_finite()) {
        return Err(FilterError::NumericalFailure("non-finite gain".into()));
    }
    Ok((g, lambda))
}
