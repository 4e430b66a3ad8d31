//! Closed-form √n-consistent pose estimators.
//!
//! Both solvers write the measurement model as a linear system `A x = b`
//! whose coefficient matrix carries the measurement noise, estimate the noise
//! variance from the system itself, subtract the resulting bias from the
//! normal equations and project the solution onto SE(3).
//!
//! The camera unknown is `α·[r₃; r₁; t₁; r₂; t₂]` where `r_i` are the rows of
//! `R_Cᵀ`, `t = -R_Cᵀ p_C` and `1/α` is the mean landmark depth. The LiDAR
//! unknown is `[vec(R_L); p_L]` with column-major `vec`.

use crate::lie::Pose;
use crate::sensors::{CameraIntrinsics, CameraObservation, LidarPoint, MeasurementBatch, SensorRig};
use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};

pub type Vector11 = SVector<f64, 11>;
pub type Vector12 = SVector<f64, 12>;

pub const MIN_CAMERA_FEATURES: usize = 6;
/// Twelve unknowns plus one row so the augmented system can reveal the noise level.
pub const MIN_LIDAR_POINTS: usize = 13;

/// Largest admissible condition number of the equilibrated normal matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsistentError {
    #[error("{got} features supplied, at least {need} required")]
    TooFewFeatures { got: usize, need: usize },
    #[error("plane normals do not span three dimensions")]
    DegenerateGeometry,
    #[error("noise pencil has no finite nonnegative eigenvalue")]
    SingularPencil,
    #[error("bias-corrected normal matrix has condition number {0:.3e}")]
    IllConditioned(f64),
    #[error("rotation block is singular (det {0:.3e})")]
    DegenerateRotationBlock(f64),
}

/// How the noise bias in the normal equations is handled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BiasCorrection {
    /// Estimate `σ̂` from the system and subtract its contribution.
    Estimated,
    /// Subtract the contribution of a known noise level.
    Known(f64),
    /// Ordinary least squares.
    None,
}

/// Layout of the 12-vector handed to [`project_to_se3`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionConvention {
    /// `vec([Rᵀ, -Rᵀp])`, the camera unknown.
    InverseTransform,
    /// `[vec(R); p]`, the LiDAR unknown.
    Direct,
}

#[derive(Debug, Clone)]
pub struct CameraLinearSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub centroid: Vector3<f64>,
    /// `[A b]ᵀ[A b]`.
    pub gram_ab: DMatrix<f64>,
    /// `[G 1]ᵀ[G 1]`.
    pub gram_g1: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct LidarLinearSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub q_bar: DMatrix<f64>,
    /// `[A b]ᵀ[A b]`.
    pub gram_ab: DMatrix<f64>,
}

/// Sensor pose in the world frame with the noise level it was solved at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistentPoseResult {
    pub pose: Pose,
    pub sigma_hat: f64,
    pub n_used: usize,
}

pub fn build_camera_system(
    obs: &[CameraObservation],
    intr: &CameraIntrinsics,
) -> Result<CameraLinearSystem, ConsistentError> {
    let n = obs.len();
    if n < MIN_CAMERA_FEATURES {
        return Err(ConsistentError::TooFewFeatures {
            got: n,
            need: MIN_CAMERA_FEATURES,
        });
    }
    let centroid = obs.iter().map(|o| o.landmark).sum::<Vector3<f64>>() / n as f64;
    let mut a = DMatrix::zeros(2 * n, 11);
    let mut g = DMatrix::zeros(2 * n, 11);
    let mut b = DVector::zeros(2 * n);
    // Each row of [A b] has eight structural nonzeros, at U_COLS or V_COLS.
    const U_COLS: [usize; 8] = [0, 1, 2, 3, 4, 5, 6, 11];
    const V_COLS: [usize; 8] = [0, 1, 2, 7, 8, 9, 10, 11];
    let mut gram_u = SMatrix::<f64, 8, 8>::zeros();
    let mut gram_v = SMatrix::<f64, 8, 8>::zeros();
    let mut gram_d = SMatrix::<f64, 4, 4>::zeros();
    for (i, o) in obs.iter().enumerate() {
        let d = o.landmark - centroid;
        let u = o.pixel.x - intr.cx;
        let v = o.pixel.y - intr.cy;
        // [A b] and [G 1] rows; G is shared by both pixel coordinates.
        let mut row_u = SVector::<f64, 12>::zeros();
        let mut row_v = SVector::<f64, 12>::zeros();
        let mut row_g = SVector::<f64, 12>::zeros();
        for k in 0..3 {
            row_u[k] = -u * d[k];
            row_v[k] = -v * d[k];
            row_g[k] = -d[k];
            row_u[3 + k] = intr.fx * o.landmark[k];
            row_v[7 + k] = intr.fy * o.landmark[k];
        }
        row_u[6] = intr.fx;
        row_v[10] = intr.fy;
        row_u[11] = u;
        row_v[11] = v;
        row_g[11] = 1.0;
        for (r, row) in [(2 * i, &row_u), (2 * i + 1, &row_v)] {
            for k in 0..11 {
                a[(r, k)] = row[k];
                g[(r, k)] = row_g[k];
            }
            b[r] = row[11];
        }
        let su = SVector::<f64, 8>::from_fn(|k, _| row_u[U_COLS[k]]);
        let sv = SVector::<f64, 8>::from_fn(|k, _| row_v[V_COLS[k]]);
        let sd = nalgebra::Vector4::new(-d.x, -d.y, -d.z, 1.0);
        gram_u.ger(1.0, &su, &su, 1.0);
        gram_v.ger(1.0, &sv, &sv, 1.0);
        gram_d.ger(2.0, &sd, &sd, 1.0);
    }
    let mut gram_ab = DMatrix::zeros(12, 12);
    let mut gram_g1 = DMatrix::zeros(12, 12);
    for r in 0..8 {
        for c in 0..8 {
            gram_ab[(U_COLS[r], U_COLS[c])] += gram_u[(r, c)];
            gram_ab[(V_COLS[r], V_COLS[c])] += gram_v[(r, c)];
        }
    }
    const G_COLS: [usize; 4] = [0, 1, 2, 11];
    for r in 0..4 {
        for c in 0..4 {
            gram_g1[(G_COLS[r], G_COLS[c])] = gram_d[(r, c)];
        }
    }
    Ok(CameraLinearSystem {
        a,
        b,
        g,
        centroid,
        gram_ab,
        gram_g1,
    })
}

pub fn build_lidar_system(points: &[LidarPoint]) -> Result<LidarLinearSystem, ConsistentError> {
    let n = points.len();
    if n < MIN_LIDAR_POINTS {
        return Err(ConsistentError::TooFewFeatures {
            got: n,
            need: MIN_LIDAR_POINTS,
        });
    }
    let mut a = DMatrix::zeros(n, 12);
    let mut b = DVector::zeros(n);
    let mut uut = Matrix3::zeros();
    let mut gram_ab = SMatrix::<f64, 13, 13>::zeros();
    for (j, pt) in points.iter().enumerate() {
        let u = pt.normal;
        let mut row = SVector::<f64, 13>::zeros();
        for c in 0..3 {
            for r in 0..3 {
                row[3 * c + r] = pt.point[c] * u[r];
            }
            row[9 + c] = u[c];
        }
        row[12] = u.dot(&pt.anchor);
        for k in 0..12 {
            a[(j, k)] = row[k];
        }
        b[j] = row[12];
        gram_ab.ger(1.0, &row, &row, 1.0);
        uut += u * u.transpose();
    }
    let gram_ab = DMatrix::from_column_slice(13, 13, gram_ab.as_slice());
    uut /= n as f64;
    let eig = uut.symmetric_eigen();
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > 1e-6 * hi) {
        return Err(ConsistentError::DegenerateGeometry);
    }
    let mut q_bar = DMatrix::zeros(12, 12);
    for k in 0..3 {
        q_bar.view_mut((3 * k, 3 * k), (3, 3)).copy_from(&uut);
    }
    Ok(LidarLinearSystem { a, b, q_bar, gram_ab })
}

/// Smallest generalised eigenvalue of the pencil `(M, N)`, clamped at zero.
///
/// `M` is the Gram matrix of the augmented system `[A b]` and `N` the Gram
/// matrix of the noise coefficients `[G 1]`; in expectation `M - σ²N` is
/// singular and positive semidefinite.
pub fn estimate_noise_variance(m: &DMatrix<f64>, n: &DMatrix<f64>) -> Result<f64, ConsistentError> {
    let dim = m.nrows();
    let scale = DVector::from_iterator(
        dim,
        (0..dim).map(|i| {
            let d = m[(i, i)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        }),
    );
    let ms = DMatrix::from_fn(dim, dim, |i, j| m[(i, j)] * scale[i] * scale[j]);
    let ns = DMatrix::from_fn(dim, dim, |i, j| n[(i, j)] * scale[i] * scale[j]);
    let eig = ms.symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    if !(lmax > 0.0) || !lmax.is_finite() {
        return Err(ConsistentError::SingularPencil);
    }
    let n_norm = ns.norm();
    let mut whiten: Vec<DVector<f64>> = Vec::new();
    for k in 0..dim {
        let v = eig.eigenvectors.column(k).into_owned();
        let lam = eig.eigenvalues[k];
        if lam > 1e-13 * lmax {
            whiten.push(v / lam.sqrt());
        } else if (v.transpose() * &ns * &v)[(0, 0)] > 1e-10 * n_norm {
            // An exact null direction of M that the noise reaches: zero noise.
            return Ok(0.0);
        }
    }
    let w = DMatrix::from_columns(&whiten);
    let c = w.transpose() * &ns * &w;
    let mu = c.symmetric_eigen().eigenvalues.max();
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(ConsistentError::SingularPencil);
    }
    Ok((1.0 / mu).max(0.0))
}

pub fn camera_noise_variance(sys: &CameraLinearSystem) -> Result<f64, ConsistentError> {
    let rows = sys.a.nrows() as f64;
    estimate_noise_variance(&(&sys.gram_ab / rows), &(&sys.gram_g1 / rows))
}

pub fn lidar_noise_variance(sys: &LidarLinearSystem) -> Result<f64, ConsistentError> {
    let m = &sys.gram_ab / sys.a.nrows() as f64;
    let mut n = DMatrix::zeros(13, 13);
    n.view_mut((0, 0), (12, 12)).copy_from(&sys.q_bar);
    estimate_noise_variance(&m, &n)
}

/// Solves the symmetric system `normal · x = rhs` after diagonal equilibration.
fn solve_equilibrated(normal: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, ConsistentError> {
    let dim = normal.nrows();
    let scale = DVector::from_iterator(dim, (0..dim).map(|i| 1.0 / normal[(i, i)].abs().sqrt().max(f64::MIN_POSITIVE)));
    let ns = DMatrix::from_fn(dim, dim, |i, j| normal[(i, j)] * scale[i] * scale[j]);
    let eig = ns.clone().symmetric_eigen();
    let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let hi = abs.iter().cloned().fold(0.0, f64::max);
    let lo = abs.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = hi / lo;
    if !(cond < MAX_CONDITION) {
        return Err(ConsistentError::IllConditioned(cond));
    }
    let rs = rhs.component_mul(&scale);
    let y = ns
        .lu()
        .solve(&rs)
        .ok_or(ConsistentError::IllConditioned(f64::INFINITY))?;
    Ok(y.component_mul(&scale))
}

/// `(AᵀA - σ̂²GᵀG)⁻¹(Aᵀb - σ̂²Gᵀ1)`.
pub fn bias_eliminated_camera_solve(sys: &CameraLinearSystem, sigma_hat: f64) -> Result<Vector11, ConsistentError> {
    let s2 = sigma_hat * sigma_hat;
    let (m, n) = (&sys.gram_ab, &sys.gram_g1);
    let normal = m.view((0, 0), (11, 11)) - n.view((0, 0), (11, 11)) * s2;
    let rhs = m.view((0, 11), (11, 1)).column(0) - n.view((0, 11), (11, 1)).column(0) * s2;
    let x = solve_equilibrated(&normal, &rhs)?;
    Ok(Vector11::from_iterator(x.iter().cloned()))
}

/// Removes the scale `α` from the camera solution and restores `t₃`.
///
/// `α` is the real cube root of the rotation block's determinant; the depth
/// offset uses `|α|` so the mean landmark depth is positive.
pub fn recover_scale_and_assemble(x: &Vector11, centroid: &Vector3<f64>) -> Result<Vector12, ConsistentError> {
    let r1 = Vector3::new(x[3], x[4], x[5]);
    let r2 = Vector3::new(x[7], x[8], x[9]);
    let r3 = Vector3::new(x[0], x[1], x[2]);
    let block = Matrix3::from_rows(&[r1.transpose(), r2.transpose(), r3.transpose()]);
    let det = block.determinant();
    if !(det.abs() > 1e-12) {
        return Err(ConsistentError::DegenerateRotationBlock(det));
    }
    let alpha = det.cbrt();
    let rct = block / alpha;
    let t3 = 1.0 / alpha.abs() - rct.row(2).transpose().dot(centroid);
    let mut out = Vector12::zeros();
    for c in 0..3 {
        for r in 0..3 {
            out[3 * c + r] = rct[(r, c)];
        }
    }
    out[9] = x[6] / alpha;
    out[10] = x[10] / alpha;
    out[11] = t3;
    Ok(out)
}

/// Nearest rotation in Frobenius norm.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap_or_else(Matrix3::identity), svd.v_t.unwrap_or_else(Matrix3::identity));
    let mut d = Matrix3::identity();
    d[(2, 2)] = (u * vt).determinant().signum();
    u * d * vt
}

/// Closest pose to a 12-vector in the given layout.
pub fn project_to_se3(x: &Vector12, conv: ProjectionConvention) -> Pose {
    let block = Matrix3::from_column_slice(&x.as_slice()[0..9]);
    let t = Vector3::new(x[9], x[10], x[11]);
    let rot = nearest_rotation(&block);
    match conv {
        ProjectionConvention::InverseTransform => {
            let r = rot.transpose();
            Pose::new(r, -(r * t))
        }
        ProjectionConvention::Direct => Pose::new(rot, t),
    }
}

fn resolve_sigma(bias: BiasCorrection, estimate: impl FnOnce() -> Result<f64, ConsistentError>) -> Result<(f64, f64), ConsistentError> {
    // Returns (σ used for the correction, σ reported).
    match bias {
        BiasCorrection::Estimated => {
            let s = estimate()?.sqrt();
            Ok((s, s))
        }
        BiasCorrection::Known(s) => Ok((s, s)),
        BiasCorrection::None => {
            let s = estimate().map(f64::sqrt).unwrap_or(0.0);
            Ok((0.0, s))
        }
    }
}

/// Camera pose in the world frame from one frame of features.
pub fn consistent_camera_pose(
    obs: &[CameraObservation],
    intr: &CameraIntrinsics,
    bias: BiasCorrection,
) -> Result<ConsistentPoseResult, ConsistentError> {
    let sys = build_camera_system(obs, intr)?;
    let (sigma, sigma_hat) = resolve_sigma(bias, || camera_noise_variance(&sys))?;
    let x = bias_eliminated_camera_solve(&sys, sigma)?;
    let x12 = recover_scale_and_assemble(&x, &sys.centroid)?;
    Ok(ConsistentPoseResult {
        pose: project_to_se3(&x12, ProjectionConvention::InverseTransform),
        sigma_hat,
        n_used: obs.len(),
    })
}

/// `(AᵀA/n - σ̂²Q̄)⁻¹ Aᵀb/n`.
pub fn bias_eliminated_lidar_solve(sys: &LidarLinearSystem, sigma_hat: f64) -> Result<Vector12, ConsistentError> {
    let n = sys.a.nrows() as f64;
    let m = &sys.gram_ab;
    let normal = m.view((0, 0), (12, 12)) / n - &sys.q_bar * (sigma_hat * sigma_hat);
    let rhs = m.view((0, 12), (12, 1)).column(0) / n;
    let x = solve_equilibrated(&normal, &rhs)?;
    Ok(Vector12::from_iterator(x.iter().cloned()))
}

/// LiDAR pose in the world frame from one scan of plane-associated points.
pub fn consistent_lidar_pose(points: &[LidarPoint], bias: BiasCorrection) -> Result<ConsistentPoseResult, ConsistentError> {
    let sys = build_lidar_system(points)?;
    let (sigma, sigma_hat) = resolve_sigma(bias, || lidar_noise_variance(&sys))?;
    let x = bias_eliminated_lidar_solve(&sys, sigma)?;
    Ok(ConsistentPoseResult {
        pose: project_to_se3(&x, ProjectionConvention::Direct),
        sigma_hat,
        n_used: points.len(),
    })
}

/// Sensor pose in the world frame; compose with the inverse extrinsics for the body pose.
pub fn consistent_pose(
    batch: &MeasurementBatch,
    rig: &SensorRig,
    bias: BiasCorrection,
) -> Result<ConsistentPoseResult, ConsistentError> {
    match batch {
        MeasurementBatch::Camera(obs) => consistent_camera_pose(obs, &rig.intrinsics, bias),
        MeasurementBatch::Lidar(points) => consistent_lidar_pose(points, bias),
    }
}
