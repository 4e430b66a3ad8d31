//! Concentrated Gaussian beliefs on SE₂(3) and their propagation.
//!
//! The error is right-invariant, `ξ = log(X X̄⁻¹)`, so `X = exp(ξ) X̄`. The
//! 15-dimensional covariance stacks `[ξ; b̃_g; b̃_a]` with bias errors taken
//! as true minus estimate.

use crate::lie::{adjoint, hat, ExtendedPose, Matrix9, Vector9};
use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub type Matrix15 = SMatrix<f64, 15, 15>;
pub type Vector15 = SVector<f64, 15>;

pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

/// Continuous-time IMU noise densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Gyroscope white noise, rad/(s·√Hz).
    pub sigma_gyro: f64,
    /// Accelerometer white noise, m/(s²·√Hz).
    pub sigma_accel: f64,
    /// Gyroscope bias random walk, rad/(s²·√Hz).
    pub sigma_bias_gyro: f64,
    /// Accelerometer bias random walk, m/(s³·√Hz).
    pub sigma_bias_accel: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            sigma_gyro: 0.01,
            sigma_accel: 0.01,
            sigma_bias_gyro: 0.001,
            sigma_bias_accel: 0.001,
        }
    }
}

/// Which noise covariance drives the error dynamics during prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationOrder {
    /// `Σ_n'` only.
    First,
    /// `Σ_4th`, which folds in the prior spread of `ξ`.
    #[default]
    Fourth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub mean: ExtendedPose,
    pub bias_gyro: Vector3<f64>,
    pub bias_accel: Vector3<f64>,
    pub cov: Matrix15,
}

impl BeliefState {
    pub fn new(mean: ExtendedPose, cov: Matrix15) -> Self {
        Self {
            mean,
            bias_gyro: Vector3::zeros(),
            bias_accel: Vector3::zeros(),
            cov,
        }
    }

    pub fn nav_cov(&self) -> Matrix9 {
        self.cov.fixed_view::<9, 9>(0, 0).into_owned()
    }

    /// Draws `exp(ξ) X̄` with `ξ ~ N(0, P_ξξ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ExtendedPose {
        let xi = sample_gaussian(&self.nav_cov(), rng);
        ExtendedPose::exp(&xi) * self.mean
    }
}

/// Draws from `N(0, p)` through a symmetric eigendecomposition, so PSD inputs are accepted.
pub fn sample_gaussian<const D: usize, R: Rng + ?Sized>(
    p: &SMatrix<f64, D, D>,
    rng: &mut R,
) -> SVector<f64, D> {
    let eig = nalgebra::DMatrix::from_column_slice(D, D, p.as_slice()).symmetric_eigen();
    let z = nalgebra::DVector::from_fn(D, |i, _| {
        let s: f64 = rng.sample(StandardNormal);
        s * eig.eigenvalues[i].max(0.0).sqrt()
    });
    SVector::<f64, D>::from_column_slice((eig.eigenvectors * z).as_slice())
}

pub fn symmetrize<const D: usize>(m: &mut SMatrix<f64, D, D>) {
    let t = m.transpose();
    *m = 0.5 * (*m + t);
}

/// `⟨⟨A⟩⟩ = -tr(A)·I + A`.
pub fn bracket1(a: &Matrix3<f64>) -> Matrix3<f64> {
    a - Matrix3::identity() * a.trace()
}

/// `⟨⟨A, B⟩⟩ = ⟨⟨A⟩⟩⟨⟨B⟩⟩ + ⟨⟨BA⟩⟩`.
pub fn bracket2(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Matrix3<f64> {
    bracket1(a) * bracket1(b) + bracket1(&(b * a))
}

fn block(m: &Matrix9, i: usize, j: usize) -> Matrix3<f64> {
    m.fixed_view::<3, 3>(3 * i, 3 * j).into_owned()
}

/// `E[ad_ξ²]` for `ξ ~ N(0, p)`.
pub fn expected_ad_squared(p: &Matrix9) -> Matrix9 {
    let ptt = bracket1(&block(p, 0, 0));
    let mut d = Matrix9::zeros();
    for k in 0..3 {
        d.fixed_view_mut::<3, 3>(3 * k, 3 * k).copy_from(&ptt);
    }
    for k in 1..3 {
        let c = block(p, 0, k);
        d.fixed_view_mut::<3, 3>(3 * k, 0)
            .copy_from(&bracket1(&(c + c.transpose())));
    }
    d
}

/// `E[ad_ξ Σ ad_ξᵀ]` for `ξ ~ N(0, p)`.
///
/// Uses `E[a^ S b^ᵀ] = ⟨⟨E[abᵀ], S⟩⟩ᵀ`. Block row `k > 0` of `ad_ξ` holds
/// `ρ_k^` in column 0 and `θ^` in column `k`.
pub fn expected_ad_sandwich(p: &Matrix9, sigma: &Matrix9) -> Matrix9 {
    // (hat source, column) pairs for each block row of ad_ξ.
    let terms = |row: usize| -> Vec<(usize, usize)> {
        if row == 0 {
            vec![(0, 0)]
        } else {
            vec![(row, 0), (0, row)]
        }
    };
    let mut out = Matrix9::zeros();
    for r in 0..3 {
        for c in r..3 {
            let mut acc = Matrix3::zeros();
            for &(sa, ca) in &terms(r) {
                for &(sb, cb) in &terms(c) {
                    acc += bracket2(&block(p, sa, sb), &block(sigma, ca, cb)).transpose();
                }
            }
            out.fixed_view_mut::<3, 3>(3 * r, 3 * c).copy_from(&acc);
            if c != r {
                out.fixed_view_mut::<3, 3>(3 * c, 3 * r)
                    .copy_from(&acc.transpose());
            }
        }
    }
    out
}

/// `Σ_4th = Σ_n' + (1/6)(DΣ_n' + Σ_n'Dᵀ) + (1/4)B` with `D = E[ad²]`, `B = E[ad Σ_n' adᵀ]`.
pub fn sigma_fourth(sigma_nprime: &Matrix9, p_bar: &Matrix9) -> Matrix9 {
    let d = expected_ad_squared(p_bar);
    let b = expected_ad_sandwich(p_bar, sigma_nprime);
    let mut out = sigma_nprime + (d * sigma_nprime + sigma_nprime * d.transpose()) / 6.0 + 0.25 * b;
    symmetrize(&mut out);
    out
}

/// Process noise `Ad_X̄ diag{σ_g²I + P_b̃g, 0, σ_a²I + P_b̃a} Ad_X̄ᵀ` seen by `ξ`.
pub fn noise_sigma_nprime(belief: &BeliefState, params: &NoiseParams) -> Matrix9 {
    let mut inner = Matrix9::zeros();
    let pbg = belief.cov.fixed_view::<3, 3>(9, 9).into_owned();
    let pba = belief.cov.fixed_view::<3, 3>(12, 12).into_owned();
    inner
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(Matrix3::identity() * params.sigma_gyro.powi(2) + pbg));
    inner
        .fixed_view_mut::<3, 3>(6, 6)
        .copy_from(&(Matrix3::identity() * params.sigma_accel.powi(2) + pba));
    let ad = adjoint(&belief.mean);
    let mut out = ad * inner * ad.transpose();
    symmetrize(&mut out);
    out
}

/// Generator `A` of the noise-free error dynamics `ξ̇ = Aξ`.
pub fn system_matrix(gravity: &Vector3<f64>) -> Matrix9 {
    let mut a = Matrix9::zeros();
    a.fixed_view_mut::<3, 3>(3, 6)
        .copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(6, 0).copy_from(&hat(gravity));
    a
}

/// `Φ(dt) = exp(A·dt) = I + A·dt + A²dt²/2`, exact because `A³ = 0`.
pub fn state_transition(dt: f64, gravity: &Vector3<f64>) -> Matrix9 {
    let a = system_matrix(gravity);
    Matrix9::identity() + a * dt + a * a * (0.5 * dt * dt)
}

/// `Q_d = ∫₀^dt Φ(τ) Σ Φ(τ)ᵀ dτ`, integrated term by term over the quadratic `Φ`.
pub fn discrete_process_noise(dt: f64, sigma: &Matrix9, gravity: &Vector3<f64>) -> Matrix9 {
    let a = system_matrix(gravity);
    let powers = [Matrix9::identity(), a, a * a];
    let coeff = [1.0, 1.0, 0.5];
    let mut q = Matrix9::zeros();
    for i in 0..3 {
        let left = powers[i] * sigma;
        for j in 0..3 {
            let m = (i + j + 1) as f64;
            q += left * powers[j].transpose() * (coeff[i] * coeff[j] * dt.powi(i as i32 + j as i32 + 1) / m);
        }
    }
    symmetrize(&mut q);
    q
}

/// How bias uncertainty enters the navigation error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasModel {
    /// Bias error is extra white noise on `ξ`; the cross-covariance stays zero.
    #[default]
    Noise,
    /// `ξ̇ = Aξ - Ad_X̄ [b̃_g; 0; b̃_a] + n`, so updates can correct the biases.
    Coupled,
}

/// `Σ_n'` with the bias blocks included only for [`BiasModel::Noise`].
pub fn noise_sigma_nprime_with(belief: &BeliefState, params: &NoiseParams, model: BiasModel) -> Matrix9 {
    match model {
        BiasModel::Noise => noise_sigma_nprime(belief, params),
        BiasModel::Coupled => {
            let mut b = belief.clone();
            b.cov.fixed_view_mut::<6, 6>(9, 9).fill(0.0);
            noise_sigma_nprime(&b, params)
        }
    }
}

/// Transition of bias error into `ξ` over one interval, `-Φ(dt/2) Ad_X̄ M dt`.
pub fn bias_coupling(x: &ExtendedPose, dt: f64, gravity: &Vector3<f64>) -> SMatrix<f64, 9, 6> {
    let ad = adjoint(x);
    let mut m = SMatrix::<f64, 9, 6>::zeros();
    m.fixed_view_mut::<9, 3>(0, 0).copy_from(&ad.fixed_view::<9, 3>(0, 0));
    m.fixed_view_mut::<9, 3>(0, 3).copy_from(&ad.fixed_view::<9, 3>(0, 6));
    -(state_transition(0.5 * dt, gravity) * m) * dt
}

/// Covariance after one IMU interval of length `dt`.
pub fn propagate_covariance(
    belief: &BeliefState,
    dt: f64,
    params: &NoiseParams,
    gravity: &Vector3<f64>,
    order: PropagationOrder,
) -> Matrix15 {
    propagate_covariance_with(belief, dt, params, gravity, order, BiasModel::Noise)
}

/// [`propagate_covariance`] under a chosen bias model.
pub fn propagate_covariance_with(
    belief: &BeliefState,
    dt: f64,
    params: &NoiseParams,
    gravity: &Vector3<f64>,
    order: PropagationOrder,
    model: BiasModel,
) -> Matrix15 {
    let p_nav = belief.nav_cov();
    let sigma_n = noise_sigma_nprime_with(belief, params, model);
    let sigma = match order {
        PropagationOrder::First => sigma_n,
        PropagationOrder::Fourth => sigma_fourth(&sigma_n, &p_nav),
    };
    let mut phi = Matrix15::identity();
    phi.fixed_view_mut::<9, 9>(0, 0).copy_from(&state_transition(dt, gravity));
    if model == BiasModel::Coupled {
        phi.fixed_view_mut::<9, 6>(0, 9)
            .copy_from(&bias_coupling(&belief.mean, dt, gravity));
    }
    let mut out = phi * belief.cov * phi.transpose();
    let qd = discrete_process_noise(dt, &sigma, gravity);
    let mut nav = out.fixed_view_mut::<9, 9>(0, 0);
    nav += qd;
    for k in 0..3 {
        out[(9 + k, 9 + k)] += params.sigma_bias_gyro.powi(2) * dt;
        out[(12 + k, 12 + k)] += params.sigma_bias_accel.powi(2) * dt;
    }
    symmetrize(&mut out);
    out
}

/// Right-invariant error `log(X X̄⁻¹)`.
pub fn invariant_error(
    x: &ExtendedPose,
    x_bar: &ExtendedPose,
) -> Result<Vector9, crate::lie::LieError> {
    (x * &x_bar.inverse()).log()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn brackets_of_identity() {
        let i = Matrix3::identity();
        assert_relative_eq!(bracket1(&i), -2.0 * i);
        assert_relative_eq!(bracket2(&i, &i), 2.0 * i);
    }

    #[test]
    fn nilpotent_generator() {
        let a = system_matrix(&GRAVITY);
        assert_eq!(a * a * a, Matrix9::zeros());
    }

    #[test]
    fn transition_blocks() {
        let phi = state_transition(0.01, &GRAVITY);
        assert_relative_eq!(
            phi.fixed_view::<3, 3>(3, 6).into_owned(),
            Matrix3::identity() * 0.01,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            phi.fixed_view::<3, 3>(6, 0).into_owned(),
            hat(&GRAVITY) * 0.01,
            epsilon = 1e-15
        );
        assert_eq!(state_transition(0.0, &GRAVITY), Matrix9::identity());
    }

    #[test]
    fn zero_prior_leaves_noise_unchanged() {
        let s = Matrix9::identity() * 0.3;
        assert_relative_eq!(sigma_fourth(&s, &Matrix9::zeros()), s);
        assert_eq!(sigma_fourth(&Matrix9::zeros(), &(Matrix9::identity() * 0.1)), Matrix9::zeros());
    }
}
