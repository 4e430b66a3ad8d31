#![allow(dead_code)]

use eikf::lie::{ExtendedPose, Pose, Vector9};
use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3, Vector6};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal<const D: usize>(rng: &mut ChaCha8Rng, sd: f64) -> SVector<f64, D> {
    SVector::from_fn(|_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Tangent vector with rotation part strictly inside the ball of radius `max_angle`.
pub fn tangent9(rng: &mut ChaCha8Rng, max_angle: f64) -> Vector9 {
    let mut xi: Vector9 = normal(rng, 2.0);
    let dir = Vector3::<f64>::from(normal::<3>(rng, 1.0)).normalize();
    let angle = rng.random_range(0.0..max_angle);
    xi.fixed_rows_mut::<3>(0).copy_from(&(dir * angle));
    xi
}

pub fn extended_pose(rng: &mut ChaCha8Rng) -> ExtendedPose {
    ExtendedPose::exp(&tangent9(rng, 3.0))
}

pub fn pose(rng: &mut ChaCha8Rng) -> Pose {
    let mut xi: Vector6<f64> = normal(rng, 1.0);
    xi.fixed_rows_mut::<3>(3).scale_mut(5.0);
    Pose::exp(&xi)
}

/// Random symmetric positive definite matrix with eigenvalues at least `floor`.
pub fn spd<const D: usize>(rng: &mut ChaCha8Rng, scale: f64, floor: f64) -> SMatrix<f64, D, D> {
    let a = DMatrix::<f64>::from_fn(D, D, |_, _| rng.sample::<f64, _>(StandardNormal));
    let m = &a * a.transpose() * (scale / D as f64) + DMatrix::identity(D, D) * floor;
    SMatrix::from_iterator(m.iter().cloned())
}

pub fn vec3_strategy(bound: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-bound..bound).prop_map(Vector3::from)
}

pub fn tangent9_strategy(max_angle: f64, bound: f64) -> impl Strategy<Value = Vector9> {
    (vec3_strategy(1.0), 0.0..max_angle, vec3_strategy(bound), vec3_strategy(bound)).prop_filter_map(
        "direction",
        |(d, a, p, v)| {
            let d = d.try_normalize(1e-3)?;
            let mut xi = Vector9::zeros();
            xi.fixed_rows_mut::<3>(0).copy_from(&(d * a));
            xi.fixed_rows_mut::<3>(3).copy_from(&p);
            xi.fixed_rows_mut::<3>(6).copy_from(&v);
            Some(xi)
        },
    )
}

/// Central differences of `f` under `T ← exp(δ)T`.
pub fn fd_left(t: &Pose, f: impl Fn(&Pose) -> DVector<f64>) -> DMatrix<f64> {
    let eps = 1e-6;
    let rows = f(t).len();
    let mut j = DMatrix::zeros(rows, 6);
    for k in 0..6 {
        let mut d = Vector6::zeros();
        d[k] = eps;
        let col = (f(&(Pose::exp(&d) * *t)) - f(&(Pose::exp(&(-d)) * *t))) / (2.0 * eps);
        j.set_column(k, &col);
    }
    j
}

pub mod oracle;
