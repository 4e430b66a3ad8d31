//! Matrix Lie groups SO(3), SE(3) and SE₂(3).
//!
//! Tangent vectors of SE₂(3) are ordered `[θ; ρ_p; ρ_v]` and those of SE(3)
//! `[θ; ρ]`. Perturbations are applied on the left: `X ← exp(δ)·X`.
//!
//! Closed-form coefficients switch to Taylor series below a per-function
//! angle so that no branch loses more than a few ulps to cancellation.

use nalgebra::{Matrix3, Matrix4, Matrix5, Matrix6, SMatrix, SVector, Vector3, Vector6};
use std::f64::consts::PI;
use std::ops::Mul;

pub type Vector9 = SVector<f64, 9>;
pub type Matrix9 = SMatrix<f64, 9, 9>;

/// Below this angle `exp`/`log` use their second-order Taylor forms.
pub const SMALL_ANGLE: f64 = 1e-6;

/// `log` refuses rotations whose angle is within this distance of π.
pub const PI_GUARD: f64 = 1e-9;

/// Jacobian coefficients with catastrophic cancellation use series below this angle.
const SERIES_ANGLE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum LieError {
    /// The rotation angle is within `PI_GUARD` of π, where the logarithm is not unique.
    #[error("rotation angle {angle} is too close to pi for a unique logarithm")]
    AngleAtPi { angle: f64 },
}

pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Coefficients `(sin φ/φ, (1-cos φ)/φ², (φ-sin φ)/φ³)` of the Rodrigues-type series.
fn rodrigues_coeffs(phi: f64) -> (f64, f64, f64) {
    let p2 = phi * phi;
    if phi < SERIES_ANGLE {
        (
            1.0 - p2 / 6.0 * (1.0 - p2 / 20.0),
            0.5 - p2 / 24.0 * (1.0 - p2 / 30.0),
            1.0 / 6.0 - p2 / 120.0 * (1.0 - p2 / 42.0),
        )
    } else {
        let half = 0.5 * phi;
        let s = half.sin();
        (phi.sin() / phi, 2.0 * s * s / p2, (phi - phi.sin()) / (p2 * phi))
    }
}

pub fn so3_exp(theta: &Vector3<f64>) -> Matrix3<f64> {
    let phi = theta.norm();
    let w = hat(theta);
    let w2 = w * w;
    if phi < SMALL_ANGLE {
        return Matrix3::identity() + w + 0.5 * w2;
    }
    let (a, b, _) = rodrigues_coeffs(phi);
    Matrix3::identity() + a * w + b * w2
}

/// Rotation angle of `r` in `[0, π]`.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = 0.5 * vee(&(r - r.transpose())).norm();
    sin.atan2(cos)
}

pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>, LieError> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let w = 0.5 * vee(&(r - r.transpose()));
    let sin = w.norm();
    let phi = sin.atan2(cos);
    if PI - phi < PI_GUARD {
        return Err(LieError::AngleAtPi { angle: phi });
    }
    if phi < SMALL_ANGLE {
        return Ok(w * (1.0 + phi * phi / 6.0));
    }
    if cos > -0.7 {
        return Ok(w * (phi / sin));
    }
    // Near π the antisymmetric part vanishes; read the axis off (R + Rᵀ)/2 - cos·I = (1 - cos)·aaᵀ.
    let s = 0.5 * (r + r.transpose()) - Matrix3::identity() * cos;
    let k = (0..3)
        .max_by(|&i, &j| s[(i, i)].total_cmp(&s[(j, j)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = s.column(k).into_owned();
    axis /= axis.norm();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    Ok(axis * phi)
}

/// Left Jacobian of SO(3); also the integral `∫₀¹ exp(sθ) ds`.
pub fn so3_left_jacobian(theta: &Vector3<f64>) -> Matrix3<f64> {
    let (_, b, c) = rodrigues_coeffs(theta.norm());
    let w = hat(theta);
    Matrix3::identity() + b * w + c * w * w
}

pub fn so3_left_jacobian_inv(theta: &Vector3<f64>) -> Matrix3<f64> {
    let phi = theta.norm();
    let p2 = phi * phi;
    let c = if phi < SERIES_ANGLE {
        1.0 / 12.0 + p2 / 720.0 + p2 * p2 / 30240.0
    } else {
        let half = 0.5 * phi;
        1.0 / p2 - half.cos() / (2.0 * phi * half.sin())
    };
    let w = hat(theta);
    Matrix3::identity() - 0.5 * w + c * w * w
}

/// `Σ_k (φ^)^k / (k+2)!`, the double integral of `exp(sθ)` used by exact IMU integration.
pub fn so3_second_integral(theta: &Vector3<f64>) -> Matrix3<f64> {
    let phi = theta.norm();
    let p2 = phi * phi;
    let (b, c) = if phi < SERIES_ANGLE {
        (
            1.0 / 6.0 - p2 / 120.0 * (1.0 - p2 / 42.0),
            1.0 / 24.0 - p2 / 720.0 * (1.0 - p2 / 56.0),
        )
    } else {
        (
            (phi - phi.sin()) / (p2 * phi),
            (p2 + 2.0 * phi.cos() - 2.0) / (2.0 * p2 * p2),
        )
    };
    let w = hat(theta);
    0.5 * Matrix3::identity() + b * w + c * w * w
}

/// Off-diagonal block of the SE(3) left Jacobian for the translation part `rho`.
fn se3_q_block(theta: &Vector3<f64>, rho: &Vector3<f64>) -> Matrix3<f64> {
    let phi = theta.norm();
    let p2 = phi * phi;
    let (c1, c2, c3) = if phi < SERIES_ANGLE {
        (
            1.0 / 6.0 - p2 / 120.0 * (1.0 - p2 / 42.0),
            1.0 / 24.0 - p2 / 720.0 * (1.0 - p2 / 56.0),
            1.0 / 120.0 - p2 / 2520.0 * (1.0 - p2 / 72.0),
        )
    } else {
        let (s, c) = phi.sin_cos();
        (
            (phi - s) / (p2 * phi),
            (p2 + 2.0 * c - 2.0) / (2.0 * p2 * p2),
            (2.0 * phi - 3.0 * s + phi * c) / (2.0 * p2 * p2 * phi),
        )
    };
    let t = hat(theta);
    let r = hat(rho);
    let tr = t * r;
    let rt = r * t;
    let trt = tr * t;
    0.5 * r + c1 * (tr + rt + trt) + c2 * (t * tr + rt * t - 3.0 * trt) + c3 * (trt * t + t * trt)
}

/// Rigid-body transform in SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rot: Matrix3<f64>,
    pub trans: Vector3<f64>,
}

impl Pose {
    pub fn new(rot: Matrix3<f64>, trans: Vector3<f64>) -> Self {
        Self { rot, trans }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rot.transpose();
        Self::new(rt, -(rt * self.trans))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rot * p + self.trans
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.trans);
        m
    }

    pub fn exp(xi: &Vector6<f64>) -> Self {
        let theta: Vector3<f64> = xi.fixed_rows::<3>(0).into_owned();
        let rho: Vector3<f64> = xi.fixed_rows::<3>(3).into_owned();
        Self::new(so3_exp(&theta), so3_left_jacobian(&theta) * rho)
    }

    pub fn log(&self) -> Result<Vector6<f64>, LieError> {
        let theta = so3_log(&self.rot)?;
        let rho = so3_left_jacobian_inv(&theta) * self.trans;
        let mut xi = Vector6::zeros();
        xi.fixed_rows_mut::<3>(0).copy_from(&theta);
        xi.fixed_rows_mut::<3>(3).copy_from(&rho);
        Ok(xi)
    }

    pub fn adjoint(&self) -> Matrix6<f64> {
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rot);
        ad.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(hat(&self.trans) * self.rot));
        ad
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        Pose::new(self.rot * rhs.rot, self.rot * rhs.trans + self.trans)
    }
}

impl Mul for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        *self * *rhs
    }
}

pub fn se3_exp(xi: &Vector6<f64>) -> Pose {
    Pose::exp(xi)
}

pub fn se3_log(t: &Pose) -> Result<Vector6<f64>, LieError> {
    t.log()
}

pub fn se3_left_jacobian(xi: &Vector6<f64>) -> Matrix6<f64> {
    let theta: Vector3<f64> = xi.fixed_rows::<3>(0).into_owned();
    let rho: Vector3<f64> = xi.fixed_rows::<3>(3).into_owned();
    let j = so3_left_jacobian(&theta);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&se3_q_block(&theta, &rho));
    out
}

pub fn se3_left_jacobian_inv(xi: &Vector6<f64>) -> Matrix6<f64> {
    let theta: Vector3<f64> = xi.fixed_rows::<3>(0).into_owned();
    let rho: Vector3<f64> = xi.fixed_rows::<3>(3).into_owned();
    let ji = so3_left_jacobian_inv(&theta);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&ji);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&ji);
    out.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(-ji * se3_q_block(&theta, &rho) * ji));
    out
}

/// Element of SE₂(3): attitude, position and velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedPose {
    pub rot: Matrix3<f64>,
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
}

impl ExtendedPose {
    pub fn new(rot: Matrix3<f64>, pos: Vector3<f64>, vel: Vector3<f64>) -> Self {
        Self { rot, pos, vel }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_pose(pose: &Pose, vel: Vector3<f64>) -> Self {
        Self::new(pose.rot, pose.trans, vel)
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.rot, self.pos)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rot.transpose();
        Self::new(rt, -(rt * self.pos), -(rt * self.vel))
    }

    pub fn to_matrix(&self) -> Matrix5<f64> {
        let mut m = Matrix5::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rot);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.vel);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.pos);
        m
    }

    pub fn exp(xi: &Vector9) -> Self {
        let theta: Vector3<f64> = xi.fixed_rows::<3>(0).into_owned();
        let j = so3_left_jacobian(&theta);
        Self::new(
            so3_exp(&theta),
            j * xi.fixed_rows::<3>(3),
            j * xi.fixed_rows::<3>(6),
        )
    }

    pub fn log(&self) -> Result<Vector9, LieError> {
        let theta = so3_log(&self.rot)?;
        let ji = so3_left_jacobian_inv(&theta);
        let mut xi = Vector9::zeros();
        xi.fixed_rows_mut::<3>(0).copy_from(&theta);
        xi.fixed_rows_mut::<3>(3).copy_from(&(ji * self.pos));
        xi.fixed_rows_mut::<3>(6).copy_from(&(ji * self.vel));
        Ok(xi)
    }

    pub fn adjoint(&self) -> Matrix9 {
        adjoint(self)
    }
}

impl Mul for ExtendedPose {
    type Output = ExtendedPose;
    fn mul(self, rhs: ExtendedPose) -> ExtendedPose {
        ExtendedPose::new(
            self.rot * rhs.rot,
            self.rot * rhs.pos + self.pos,
            self.rot * rhs.vel + self.vel,
        )
    }
}

impl Mul for &ExtendedPose {
    type Output = ExtendedPose;
    fn mul(self, rhs: &ExtendedPose) -> ExtendedPose {
        *self * *rhs
    }
}

pub fn se23_exp(xi: &Vector9) -> ExtendedPose {
    ExtendedPose::exp(xi)
}

pub fn se23_log(x: &ExtendedPose) -> Result<Vector9, LieError> {
    x.log()
}

/// `Ad_X` such that `X exp(ξ) X⁻¹ = exp(Ad_X ξ)`.
pub fn adjoint(x: &ExtendedPose) -> Matrix9 {
    let mut ad = Matrix9::zeros();
    for k in 0..3 {
        ad.fixed_view_mut::<3, 3>(3 * k, 3 * k).copy_from(&x.rot);
    }
    ad.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(hat(&x.pos) * x.rot));
    ad.fixed_view_mut::<3, 3>(6, 0)
        .copy_from(&(hat(&x.vel) * x.rot));
    ad
}

/// Matrix of the Lie bracket `y ↦ [ξ, y]`.
pub fn little_ad(xi: &Vector9) -> Matrix9 {
    let t = hat(&xi.fixed_rows::<3>(0).into_owned());
    let mut ad = Matrix9::zeros();
    for k in 0..3 {
        ad.fixed_view_mut::<3, 3>(3 * k, 3 * k).copy_from(&t);
    }
    ad.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&hat(&xi.fixed_rows::<3>(3).into_owned()));
    ad.fixed_view_mut::<3, 3>(6, 0)
        .copy_from(&hat(&xi.fixed_rows::<3>(6).into_owned()));
    ad
}

/// Coefficients `B_k / k!` of `x / (eˣ - 1)`, for `k = 0..=order`.
fn bernoulli_over_factorial(order: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for n in 1..=order {
        // Σ_{k=0}^{n} c_k / (n-k+1)! = 0
        let mut acc = 0.0;
        let mut fact = 1.0;
        for k in (0..n).rev() {
            fact *= (n - k + 1) as f64;
            acc += c[k] / fact;
        }
        c.push(-acc);
    }
    c
}

/// Inverse of the SE₂(3) left Jacobian as the series `Σ_{k≤order} (B_k/k!) ad_ξᵏ`.
pub fn dexp_inv(xi: &Vector9, order: usize) -> Matrix9 {
    let ad = little_ad(xi);
    let coeffs = bernoulli_over_factorial(order);
    let mut out = Matrix9::identity();
    let mut pow = Matrix9::identity();
    for &c in coeffs.iter().skip(1) {
        pow *= ad;
        if c != 0.0 {
            out += c * pow;
        }
    }
    out
}

/// Closed-form SE₂(3) left Jacobian: `exp(ξ + δ) ≈ exp(J_l(ξ) δ) exp(ξ)`.
pub fn se23_left_jacobian(xi: &Vector9) -> Matrix9 {
    let theta: Vector3<f64> = xi.fixed_rows::<3>(0).into_owned();
    let j = so3_left_jacobian(&theta);
    let mut out = Matrix9::zeros();
    for k in 0..3 {
        out.fixed_view_mut::<3, 3>(3 * k, 3 * k).copy_from(&j);
    }
    for k in 1..3 {
        let rho: Vector3<f64> = xi.fixed_rows::<3>(3 * k).into_owned();
        out.fixed_view_mut::<3, 3>(3 * k, 0)
            .copy_from(&se3_q_block(&theta, &rho));
    }
    out
}

/// Closed-form inverse of [`se23_left_jacobian`]; the limit of [`dexp_inv`] as the order grows.
pub fn se23_left_jacobian_inv(xi: &Vector9) -> Matrix9 {
    let theta: Vector3<f64> = xi.fixed_rows::<3>(0).into_owned();
    let ji = so3_left_jacobian_inv(&theta);
    let mut out = Matrix9::zeros();
    for k in 0..3 {
        out.fixed_view_mut::<3, 3>(3 * k, 3 * k).copy_from(&ji);
    }
    for k in 1..3 {
        let rho: Vector3<f64> = xi.fixed_rows::<3>(3 * k).into_owned();
        out.fixed_view_mut::<3, 3>(3 * k, 0)
            .copy_from(&(-ji * se3_q_block(&theta, &rho) * ji));
    }
    out
}

/// First-order approximation of `log(exp(x) exp(y))` for small `x`.
pub fn bch_compose_left_small(x: &Vector9, y: &Vector9) -> Vector9 {
    dexp_inv(y, 4) * x + y
}

/// Rotation from roll, pitch, yaw applied in Z-Y-X order.
pub fn rotation_from_rpy(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    so3_exp(&Vector3::new(0.0, 0.0, yaw))
        * so3_exp(&Vector3::new(0.0, pitch, 0.0))
        * so3_exp(&Vector3::new(roll, 0.0, 0.0))
}
