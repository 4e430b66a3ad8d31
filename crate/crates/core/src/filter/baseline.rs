use super::{information_gain, FilterConfig, FilterError, NormalEquations, UpdatePath, UpdateReport};
use crate::gaussian::{symmetrize, Matrix15, Vector15};
use crate::lie::{hat, so3_exp, ExtendedPose};
use crate::sensors::{imu_mean_propagate, ErrorConvention, ImuSample, MeasurementBatch};
use nalgebra::{Matrix3, SMatrix, Vector3};

/// Belief over `[δθ, δp, δv, δb_g, δb_a]` with `R = R̂ exp(δθ)` and additive
/// errors elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStateBelief {
    pub mean: ExtendedPose,
    pub bias_gyro: Vector3<f64>,
    pub bias_accel: Vector3<f64>,
    pub cov: Matrix15,
}

impl ErrorStateBelief {
    pub fn new(mean: ExtendedPose, cov: Matrix15) -> Self {
        Self {
            mean,
            bias_gyro: Vector3::zeros(),
            bias_accel: Vector3::zeros(),
            cov,
        }
    }

    fn boxplus(&self, d: &Vector15) -> (ExtendedPose, Vector3<f64>, Vector3<f64>) {
        let m = &self.mean;
        (
            ExtendedPose::new(
                m.rot * so3_exp(&d.fixed_rows::<3>(0).into_owned()),
                m.pos + d.fixed_rows::<3>(3),
                m.vel + d.fixed_rows::<3>(6),
            ),
            self.bias_gyro + d.fixed_rows::<3>(9),
            self.bias_accel + d.fixed_rows::<3>(12),
        )
    }
}

fn error_dynamics(x: &ExtendedPose, omega: &Vector3<f64>, accel: &Vector3<f64>) -> Matrix15 {
    let mut a = Matrix15::zeros();
    let i3 = Matrix3::identity();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-hat(omega)));
    a.fixed_view_mut::<3, 3>(0, 9).copy_from(&(-i3));
    a.fixed_view_mut::<3, 3>(3, 6).copy_from(&i3);
    a.fixed_view_mut::<3, 3>(6, 0).copy_from(&(-(x.rot * hat(accel))));
    a.fixed_view_mut::<3, 3>(6, 12).copy_from(&(-x.rot));
    a
}

pub fn error_state_predict(
    belief: &ErrorStateBelief,
    window: &[ImuSample],
    t_end: f64,
    cfg: &FilterConfig,
) -> Result<ErrorStateBelief, FilterError> {
    if window.is_empty() {
        return Err(FilterError::EmptyWindow);
    }
    let n = &cfg.imu;
    let mut qc = Matrix15::zeros();
    for k in 0..3 {
        qc[(k, k)] = n.sigma_gyro.powi(2);
        qc[(6 + k, 6 + k)] = n.sigma_accel.powi(2);
        qc[(9 + k, 9 + k)] = n.sigma_bias_gyro.powi(2);
        qc[(12 + k, 12 + k)] = n.sigma_bias_accel.powi(2);
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
        let ad = error_dynamics(&b.mean, &(s.gyro - b.bias_gyro), &(s.accel - b.bias_accel)) * dt;
        let f = Matrix15::identity() + ad + ad * ad * 0.5;
        let qd = (f * qc * f.transpose() + qc) * (0.5 * dt);
        b.cov = f * b.cov * f.transpose() + qd;
        symmetrize(&mut b.cov);
        b.mean = imu_mean_propagate(&b.mean, &b.bias_gyro, &b.bias_accel, s, dt, &cfg.gravity);
    }
    Ok(b)
}

/// Error-state EKF update, iterated up to `max_iterations` times.
///
/// Iterates are `x̄ ⊞ K(y + Hδ)` with `δ = x ⊟ x̄`. Iteration stops once the
/// increment moves by at most the configured tolerance.
pub fn error_state_update(
    belief: &ErrorStateBelief,
    batch: &MeasurementBatch,
    sigma: f64,
    max_iterations: usize,
    cfg: &FilterConfig,
) -> Result<(ErrorStateBelief, UpdateReport), FilterError> {
    let p_bar = belief.cov;
    let mut l = SMatrix::<f64, 6, 15>::zeros();
    l.fixed_view_mut::<6, 6>(0, 0).fill_with_identity();

    let mut state = (belief.mean, belief.bias_gyro, belief.bias_accel);
    let mut delta = Vector15::zeros();
    let mut iterations = 0;
    let mut features_used = 0;
    let mut features_dropped = 0;
    let mut cov = p_bar;
    let mut costs = Vec::new();
    let mut gain_norm = 0.0;
    while iterations < max_iterations {
        let lin = batch.linearize(&cfg.rig, &state.0.pose(), ErrorConvention::BodyRotation);
        if lin.rows() == 0 {
            if iterations == 0 {
                return Err(FilterError::EmptyBatch);
            }
            break;
        }
        if iterations == 0 {
            features_used = lin.rows() / batch.rows_per_feature();
            features_dropped = lin.dropped;
        }
        let ne = NormalEquations::new(&lin);
        costs.push(ne.yty / (sigma * sigma));
        let (g, lambda) = information_gain(&p_bar, &l, &ne.hth, sigma)?;
        let d6 = delta.fixed_rows::<6>(0).into_owned();
        let next = g * l.transpose() * (ne.hty + ne.hth * d6) / (sigma * sigma);
        let kh = g * lambda;
        gain_norm = kh.norm();
        cov = (Matrix15::identity() - kh) * p_bar;
        symmetrize(&mut cov);
        let step = (next - delta).norm();
        delta = next;
        state = belief.boxplus(&delta);
        iterations += 1;
        if step <= cfg.update.tolerance {
            break;
        }
    }
    if !state.0.to_matrix().iter().chain(cov.iter()).all(|v| v.is_finite()) {
        return Err(FilterError::NumericalFailure("non-finite posterior".into()));
    }
    let out = ErrorStateBelief {
        mean: state.0,
        bias_gyro: state.1,
        bias_accel: state.2,
        cov,
    };
    let report = UpdateReport {
        path: UpdatePath::Iterated,
        iterations,
        final_cost: costs.last().copied().unwrap_or(0.0),
        costs,
        gain_norm,
        features_used,
        features_dropped,
        sigma,
    };
    Ok((out, report))
}
