use super::{
    information_gain, CostForm, FilterConfig, FilterError, NormalEquations, SigmaSource, UpdatePath,
    UpdateReport,
};
use crate::consistent::{consistent_pose, BiasCorrection};
use crate::gaussian::{propagate_covariance_with, symmetrize, BeliefState, Matrix15, Vector15};
use crate::lie::{se23_left_jacobian, ExtendedPose, Matrix9, Vector9};
use crate::sensors::{imu_mean_propagate, ErrorConvention, ImuSample, Linearization, MeasurementBatch};
use nalgebra::{SMatrix, Vector6};

/// Propagates mean and covariance through an IMU window up to `t_end`.
///
/// Sample `i` is held until sample `i + 1`; the last one is held until `t_end`.
pub fn predict(
    belief: &BeliefState,
    window: &[ImuSample],
    t_end: f64,
    cfg: &FilterConfig,
) -> Result<BeliefState, FilterError> {
    if window.is_empty() {
        return Err(FilterError::EmptyWindow);
    }
    let mut b = belief.clone();
    for (i, s) in window.iter().enumerate() {
        let next = window.get(i + 1).map_or(t_end, |n| n.t);
        if !(next >= s.t) {
            return Err(FilterError::NonMonotonicTime { prev: s.t, next });
        }
        let dt = next - s.t;
        if dt == 0.0 {
            continue;
        }
        let cov = propagate_covariance_with(&b, dt, &cfg.imu, &cfg.gravity, cfg.propagation, cfg.bias_model);
        b.mean = imu_mean_propagate(&b.mean, &b.bias_gyro, &b.bias_accel, s, dt, &cfg.gravity);
        b.cov = cov;
    }
    Ok(b)
}

fn nav(delta: &Vector15) -> Vector9 {
    delta.fixed_rows::<9>(0).into_owned()
}

fn pose_part(delta: &Vector15) -> Vector6<f64> {
    delta.fixed_rows::<6>(0).into_owned()
}

/// `diag(J_l(δ), I₆)`, the inverse of the iteration Jacobian `dexp⁻¹_δ`.
fn augmented_jacobian_inv(jl: &Matrix9) -> Matrix15 {
    let mut j = Matrix15::identity();
    j.fixed_view_mut::<9, 9>(0, 0).copy_from(jl);
    j
}

fn cost(
    form: CostForm,
    delta: &Vector15,
    p_bar: &Matrix15,
    p_bar_inv: Option<&Matrix15>,
    lin: &Linearization,
    sigma: f64,
) -> f64 {
    let prior = match (form, p_bar_inv) {
        (CostForm::Map, Some(pi)) => (delta.transpose() * pi * delta)[0],
        _ => {
            let ji = augmented_jacobian_inv(&se23_left_jacobian(&nav(delta)));
            (delta.transpose() * ji * p_bar * ji.transpose() * delta)[0]
        }
    };
    prior + lin.innovation.norm_squared() / (sigma * sigma)
}

fn invert_covariance(p: &Matrix15) -> Result<Matrix15, FilterError> {
    p.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| FilterError::NumericalFailure("prior covariance is not positive definite".into()))
}

/// Iterated invariant update starting from `mu0`.
///
/// Each iterate is `μ = exp(K(y + Hδ)) X̄` with `δ = log(μ X̄⁻¹)`; bias
/// increments ride along in the last six components of `δ`. The posterior
/// covariance is taken at the last point the measurement was linearised at,
/// so one iteration from `X̄` is exactly the invariant EKF update.
pub fn iterated_update(
    belief: &BeliefState,
    batch: &MeasurementBatch,
    mu0: &ExtendedPose,
    sigma: f64,
    max_iterations: usize,
    cfg: &FilterConfig,
) -> Result<(BeliefState, UpdateReport), FilterError> {
    let x_bar = belief.mean;
    let x_bar_inv = x_bar.inverse();
    let p_bar = belief.cov;
    let p_bar_inv = match cfg.update.cost {
        CostForm::Map => Some(invert_covariance(&p_bar)?),
        CostForm::Printed => None,
    };

    let mut mu = *mu0;
    let mut delta = Vector15::zeros();
    delta.fixed_rows_mut::<9>(0).copy_from(&(mu * x_bar_inv).log()?);
    let mut lin = batch.linearize(&cfg.rig, &mu.pose(), ErrorConvention::LeftInvariant);
    if lin.rows() == 0 {
        return Err(FilterError::EmptyBatch);
    }
    let features_used = lin.rows() / batch.rows_per_feature();
    let features_dropped = lin.dropped;

    let mut costs = vec![cost(cfg.update.cost, &delta, &p_bar, p_bar_inv.as_ref(), &lin, sigma)];
    let mut iterations = 0;
    let mut gain_norm;
    let mut cov;
    loop {
        let jl = se23_left_jacobian(&nav(&delta));
        let mut l = SMatrix::<f64, 6, 15>::zeros();
        l.fixed_view_mut::<6, 9>(0, 0).copy_from(&jl.fixed_view::<6, 9>(0, 0));
        let ne = NormalEquations::new(&lin);
        let (g, lambda) = information_gain(&p_bar, &l, &ne.hth, sigma)?;
        let rhs = l.transpose() * (ne.hty + ne.hth * pose_part(&delta)) / (sigma * sigma);
        let ji = augmented_jacobian_inv(&jl);
        let kh = g * lambda;
        gain_norm = kh.norm();
        cov = ji * (Matrix15::identity() - kh) * p_bar * ji.transpose();
        symmetrize(&mut cov);

        delta = g * rhs;
        mu = ExtendedPose::exp(&nav(&delta)) * x_bar;
        iterations += 1;
        if iterations >= max_iterations {
            break;
        }
        let next = batch.linearize(&cfg.rig, &mu.pose(), ErrorConvention::LeftInvariant);
        if next.rows() == 0 {
            break;
        }
        lin = next;
        let c = cost(cfg.update.cost, &delta, &p_bar, p_bar_inv.as_ref(), &lin, sigma);
        let prev = *costs.last().expect("initial cost recorded");
        costs.push(c);
        if (c - prev).abs() <= cfg.update.tolerance {
            break;
        }
    }

    let finite = mu.to_matrix().iter().chain(cov.iter()).all(|v| v.is_finite());
    if !finite {
        return Err(FilterError::NumericalFailure("non-finite posterior".into()));
    }
    let out = BeliefState {
        mean: mu,
        bias_gyro: belief.bias_gyro + delta.fixed_rows::<3>(9),
        bias_accel: belief.bias_accel + delta.fixed_rows::<3>(12),
        cov,
    };
    let report = UpdateReport {
        path: UpdatePath::Iterated,
        iterations,
        final_cost: *costs.last().expect("initial cost recorded"),
        costs,
        gain_norm,
        features_used,
        features_dropped,
        sigma,
    };
    Ok((out, report))
}

/// One update step linearised at the consistent pose estimate.
///
/// The velocity of the linearisation point is the prior velocity; the
/// measurement noise is the batch's own `σ̂` unless configured otherwise.
pub fn eikf_update(
    belief: &BeliefState,
    batch: &MeasurementBatch,
    cfg: &FilterConfig,
) -> Result<(BeliefState, UpdateReport), FilterError> {
    let cons = consistent_pose(batch, &cfg.rig, BiasCorrection::Estimated)?;
    let body = cons.pose * batch.extrinsics(&cfg.rig).inverse();
    let mu = ExtendedPose::from_pose(&body, belief.mean.vel);
    let sigma = match cfg.update.sigma_source {
        SigmaSource::Estimated => cons.sigma_hat.max(cfg.update.sigma_floor),
        SigmaSource::Nominal => cfg.nominal_sigma(batch),
    };
    let (out, mut report) = iterated_update(belief, batch, &mu, sigma, 1, cfg)?;
    report.path = UpdatePath::ConsistentInit;
    Ok((out, report))
}

/// Consistent initialisation for large batches, iterated update otherwise.
///
/// A batch the consistent solver rejects falls back to the iterated path.
pub fn practical_eikf_step(
    belief: &BeliefState,
    batch: &MeasurementBatch,
    cfg: &FilterConfig,
) -> Result<(BeliefState, UpdateReport), FilterError> {
    let sigma = cfg.nominal_sigma(batch);
    let l_max = cfg.update.max_iterations;
    if batch.len() <= cfg.update.consistent_threshold {
        return iterated_update(belief, batch, &belief.mean, sigma, l_max, cfg);
    }
    match eikf_update(belief, batch, cfg) {
        Ok(r) => Ok(r),
        Err(FilterError::Consistent(e)) => {
            log::debug!("consistent initialisation rejected batch: {e}");
            let (out, mut report) = iterated_update(belief, batch, &belief.mean, sigma, l_max, cfg)?;
            report.path = UpdatePath::ConsistentFallback;
            Ok((out, report))
        }
        Err(e) => Err(e),
    }
}
