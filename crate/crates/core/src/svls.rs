//! Subspace estimation by truncated SVD followed by a least-squares fit of the
//! core matrix, plus the skeleton (CUR) reconstruction for sampling designs.
//!
//! With `U` (`m x r`) and `V` (`n x r`) orthonormal, the estimate is
//! `X = U M V^T` where `M` minimizes
//!
//! ```text
//! f(M) = ||a_row U M V^T - b_row||_F^2 + ||U M V^T a_col - b_col||_F^2.
//! ```
//!
//! Setting the gradient to zero gives the Sylvester equation `P M + M Q = C`
//! with `P = (a_row U)^T (a_row U)`, `Q = (V^T a_col)(V^T a_col)^T` and
//! `C = (a_row U)^T b_row V + U^T b_col a_col^T V`. Both `P` and `Q` are small
//! and positive semidefinite, so the equation diagonalizes in their eigenbases.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{
    check_finite, numerical_rank, orthonormality_deviation, sign_normalize_columns,
    singular_values, symmetric_eigen, thin_svd, truncated_svd, DenseMatrix,
};
use crate::measurements::{DesignKind, MeasurementDesign, MeasurementSet};

/// Orthonormality tolerance on `||B^T B - I||_F` for bases handed to the core solvers.
pub const BASIS_TOL: f64 = 1e-8;

/// Relative cut on `lambda_i + mu_j` in the Sylvester solve.
pub const SYLVESTER_REL_TOL: f64 = 1e-12;

/// Relative singular value cut for the overlap pseudo-inverse.
pub const PINV_REL_TOL: f64 = 1e-10;

/// Row cap for [`solve_core_bruteforce`].
pub const BRUTEFORCE_MAX_ROWS: usize = 20_000;

#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    /// `d x r`, orthonormal columns, largest-magnitude entry of each column positive.
    pub basis: DenseMatrix,
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
}

impl SubspaceBasis {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub x_hat: DenseMatrix,
    pub rank_used: usize,
    /// The fitted `r x r` core for SVLS, `W^+` for CUR, absent for the baselines.
    pub core: Option<DenseMatrix>,
    /// `||a_row x_hat - b_row||_F`. For operator-based solvers, the full
    /// measurement residual `||A vec(x_hat) - b||`.
    pub row_residual: f64,
    /// `||x_hat a_col - b_col||_F`; zero for operator-based solvers.
    pub col_residual: f64,
    pub relative_error: Option<f64>,
    pub runtime_seconds: f64,
    pub algorithm: String,
    /// Zero for one-shot algorithms.
    pub iterations: usize,
    pub final_objective: Option<f64>,
    /// Objective value after every (half-)step of the iterative solvers.
    pub objective_trace: Vec<f64>,
}

/// JSON shape of a [`RecoveryResult`]; `x_hat` is referenced by file name.
#[derive(Debug, Clone, Serialize)]
pub struct ResultSummary {
    pub algorithm: String,
    pub rank_used: usize,
    pub row_residual: f64,
    pub col_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<f64>,
    pub runtime_seconds: f64,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_objective: Option<f64>,
    pub x_hat: String,
}

impl RecoveryResult {
    /// Records `||x_hat - x||_F / ||x||_F` (or the absolute error when `x = 0`).
    pub fn with_truth(mut self, x: &DenseMatrix) -> Self {
        self.relative_error = Some(relative_error(&self.x_hat, x));
        self
    }

    pub fn summary(&self, x_hat_file: &str) -> ResultSummary {
        ResultSummary {
            algorithm: self.algorithm.clone(),
            rank_used: self.rank_used,
            row_residual: self.row_residual,
            col_residual: self.col_residual,
            relative_error: self.relative_error,
            runtime_seconds: self.runtime_seconds,
            iterations: self.iterations,
            final_objective: self.final_objective,
            x_hat: x_hat_file.to_string(),
        }
    }
}

pub fn relative_error(x_hat: &DenseMatrix, x: &DenseMatrix) -> f64 {
    let scale = x.norm();
    let diff = (x_hat - x).norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// `(||a_row x - b_row||_F, ||x a_col - b_col||_F)`.
pub fn block_residuals(
    x: &DenseMatrix,
    design: &MeasurementDesign,
    meas: &MeasurementSet,
) -> (f64, f64) {
    (
        (&design.a_row * x - &meas.b_row).norm(),
        (x * &design.a_col - &meas.b_col).norm(),
    )
}

/// Least-squares objective of a candidate `x` against both blocks.
pub fn ls_objective(x: &DenseMatrix, design: &MeasurementDesign, meas: &MeasurementSet) -> f64 {
    let (r, c) = block_residuals(x, design, meas);
    r * r + c * c
}

fn check_rank(r: usize, max: usize) -> Result<()> {
    if r == 0 || r > max {
        Err(Error::InvalidRank { rank: r, max })
    } else {
        Ok(())
    }
}

/// Top-`r` left singular subspace of `b_col`.
pub fn estimate_col_space(b_col: &DenseMatrix, r: usize) -> Result<SubspaceBasis> {
    check_rank(r, b_col.nrows().min(b_col.ncols()))?;
    check_finite(b_col, "measurement block")?;
    let (mut basis, singular_values, _) = truncated_svd(b_col, r);
    sign_normalize_columns(&mut basis);
    Ok(SubspaceBasis {
        basis,
        singular_values,
    })
}

/// Top-`r` right singular subspace of `b_row`.
pub fn estimate_row_space(b_row: &DenseMatrix, r: usize) -> Result<SubspaceBasis> {
    estimate_col_space(&b_row.transpose(), r)
}

/// The normal equation `P M + M Q = C` of the core least-squares problem.
#[derive(Debug, Clone)]
pub struct CoreSystem {
    pub p: DenseMatrix,
    pub q: DenseMatrix,
    pub c: DenseMatrix,
}

impl CoreSystem {
    pub fn residual(&self, core: &DenseMatrix) -> f64 {
        (&self.p * core + core * &self.q - &self.c).norm()
    }
}

fn check_core_inputs(
    u: &SubspaceBasis,
    v: &SubspaceBasis,
    design: &MeasurementDesign,
    meas: &MeasurementSet,
) -> Result<()> {
    meas.check_against(design)?;
    for b in [u, v] {
        let deviation = orthonormality_deviation(&b.basis);
        if !(deviation <= BASIS_TOL) {
            return Err(Error::InvalidBasis { deviation });
        }
    }
    if u.basis.nrows() != design.m() || v.basis.nrows() != design.n() {
        return Err(Error::Shape(format!(
            "bases {:?} and {:?} do not match a {}x{} target",
            u.basis.shape(),
            v.basis.shape(),
            design.m(),
            design.n()
        )));
    }
    if u.rank() != v.rank() {
        return Err(Error::Shape(format!(
            "column basis has rank {}, row basis has rank {}",
            u.rank(),
            v.rank()
        )));
    }
    Ok(())
}

pub fn core_system(
    u: &SubspaceBasis,
    v: &SubspaceBasis,
    design: &MeasurementDesign,
    meas: &MeasurementSet,
) -> Result<CoreSystem> {
    check_core_inputs(u, v, design, meas)?;
    let (u, v) = (&u.basis, &v.basis);
    let au = &design.a_row * u;
    let va = v.transpose() * &design.a_col;
    let p = au.transpose() * &au;
    let q = &va * va.transpose();
    let c = au.transpose() * (&meas.b_row * v) + u.transpose() * (&meas.b_col * va.transpose());
    Ok(CoreSystem { p, q, c })
}

/// Minimum-norm solution of `P M + M Q = C` for symmetric PSD `P` (`r x r`)
/// and `Q` (`s x s`). Modes with `lambda_i + mu_j <= 1e-12 (lambda_max + mu_max)`
/// are set to zero.
pub fn solve_psd_sylvester(p: &DenseMatrix, q: &DenseMatrix, c: &DenseMatrix) -> DenseMatrix {
    let (lp, ep) = symmetric_eigen(p);
    let (lq, eq) = symmetric_eigen(q);
    let lmax = lp.last().copied().unwrap_or(0.0);
    let mmax = lq.last().copied().unwrap_or(0.0);
    let cut = SYLVESTER_REL_TOL * (lmax + mmax);
    let mut coeffs = ep.transpose() * c * &eq;
    for j in 0..coeffs.ncols() {
        for i in 0..coeffs.nrows() {
            let denom = lp[i] + lq[j];
            coeffs[(i, j)] = if denom > cut && denom > 0.0 {
                coeffs[(i, j)] / denom
            } else {
                0.0
            };
        }
    }
    &ep * coeffs * eq.transpose()
}

/// Least-squares core `M` for fixed bases `u`, `v`.
pub fn solve_core(
    u: &SubspaceBasis,
    v: &SubspaceBasis,
    design: &MeasurementDesign,
    meas: &MeasurementSet,
) -> Result<DenseMatrix> {
    let sys = core_system(u, v, design, meas)?;
    Ok(solve_psd_sylvester(&sys.p, &sys.q, &sys.c))
}

/// Same minimization as [`solve_core`], solved on the explicit
/// `(k1 n + m k2) x r^2` system over the row-major flattened core with a
/// rank-revealing SVD solve. For tests and small instances.
pub fn solve_core_bruteforce(
    u: &SubspaceBasis,
    v: &SubspaceBasis,
    design: &MeasurementDesign,
    meas: &MeasurementSet,
) -> Result<DenseMatrix> {
    solve_core_bruteforce_capped(u, v, design, meas, BRUTEFORCE_MAX_ROWS)
}

pub fn solve_core_bruteforce_capped(
    u: &SubspaceBasis,
    v: &SubspaceBasis,
    design: &MeasurementDesign,
    meas: &MeasurementSet,
    max_rows: usize,
) -> Result<DenseMatrix> {
    check_core_inputs(u, v, design, meas)?;
    let (m, n, k1, k2) = (design.m(), design.n(), design.k1(), design.k2());
    let r = u.rank();
    let rows = k1 * n + m * k2;
    if rows > max_rows {
        return Err(Error::TooLarge(format!(
            "brute-force system has {rows} rows, cap is {max_rows}"
        )));
    }
    let g = &design.a_row * &u.basis; // k1 x r
    let h = v.basis.transpose() * &design.a_col; // r x k2
    let (ub, vb) = (&u.basis, &v.basis);

    let mut sys = DenseMatrix::zeros(rows, r * r);
    let mut rhs = DenseMatrix::zeros(rows, 1);
    let mut row = 0;
    for i in 0..k1 {
        for j in 0..n {
            for a in 0..r {
                for b in 0..r {
                    sys[(row, a * r + b)] = g[(i, a)] * vb[(j, b)];
                }
            }
            rhs[row] = meas.b_row[(i, j)];
            row += 1;
        }
    }
    for i in 0..m {
        for j in 0..k2 {
            for a in 0..r {
                for b in 0..r {
                    sys[(row, a * r + b)] = ub[(i, a)] * h[(b, j)];
                }
            }
            rhs[row] = meas.b_col[(i, j)];
            row += 1;
        }
    }

    let flat = lstsq_min_norm(sys, &rhs);
    Ok(DenseMatrix::from_row_slice(r, r, flat.as_slice()))
}

/// Minimum-norm least-squares solution via SVD, cutting singular values at
/// `max(rows, cols) * eps * sigma_max`.
pub(crate) fn lstsq_min_norm(a: DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let dims = a.nrows().max(a.ncols()) as f64;
    let svd = thin_svd(&a);
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let eps = dims * f64::EPSILON * smax;
    let mut coeffs = svd.u.transpose() * b;
    for (t, &s) in svd.s.iter().enumerate() {
        if s > eps && s > 0.0 {
            coeffs.row_mut(t).unscale_mut(s);
        } else {
            coeffs.row_mut(t).fill(0.0);
        }
    }
    &svd.v * coeffs
}

/// Full pipeline: column space from `b_col`, row space from `b_row`, least
/// squares for the core, `x_hat = U M V^T`.
pub fn svls_recover(
    meas: &MeasurementSet,
    design: &MeasurementDesign,
    r: usize,
) -> Result<RecoveryResult> {
    meas.check_against(design)?;
    check_rank(
        r,
        design.k1().min(design.k2()).min(design.m()).min(design.n()),
    )?;
    let start = Instant::now();
    let u = estimate_col_space(&meas.b_col, r)?;
    let v = estimate_row_space(&meas.b_row, r)?;
    let core = solve_core(&u, &v, design, meas)?;
    let x_hat = &u.basis * &core * v.basis.transpose();
    let runtime_seconds = start.elapsed().as_secs_f64();

    let (row_residual, col_residual) = block_residuals(&x_hat, design, meas);
    Ok(RecoveryResult {
        x_hat,
        rank_used: r,
        core: Some(core),
        row_residual,
        col_residual,
        relative_error: None,
        runtime_seconds,
        algorithm: "svls".into(),
        iterations: 0,
        final_objective: Some(row_residual * row_residual + col_residual * col_residual),
        objective_trace: Vec::new(),
    })
}

/// Averaged overlap block `W` (`k1 x k2`) of a sampling design.
pub fn overlap_block(meas: &MeasurementSet, design: &MeasurementDesign) -> Result<DenseMatrix> {
    if design.kind != DesignKind::RowColSample {
        return Err(Error::WrongDesign(format!(
            "skeleton reconstruction needs a RowColSample design, got {}",
            design.kind
        )));
    }
    meas.check_against(design)?;
    let (Some(rows), Some(cols)) = (&design.row_indices, &design.col_indices) else {
        return Err(Error::InvalidDesign(
            "sampling design without index lists".into(),
        ));
    };
    let from_rows = meas.b_row.select_columns(cols.iter());
    let from_cols = meas.b_col.select_rows(rows.iter());
    Ok((from_rows + from_cols) * 0.5)
}

/// Skeleton reconstruction `x_hat = b_col W^+ b_row` for sampling designs.
///
/// Singular values of `W` at or below `max(1e-10 sigma_1(W), 3 sigma)` are
/// dropped; `rank_used` is the number kept. A rank-deficient overlap yields a
/// lower-rank estimate, not an error.
pub fn cur_recover(meas: &MeasurementSet, design: &MeasurementDesign) -> Result<RecoveryResult> {
    let start = Instant::now();
    let w = overlap_block(meas, design)?;
    let svd = thin_svd(&w);
    let s1 = svd.s.first().copied().unwrap_or(0.0);
    let mut cut = PINV_REL_TOL * s1;
    if meas.sigma > 0.0 {
        cut = cut.max(3.0 * meas.sigma);
    }
    let mut w_pinv = DenseMatrix::zeros(w.ncols(), w.nrows());
    let mut rank_used = 0;
    for (t, &s) in svd.s.iter().enumerate() {
        if s > cut && s > 0.0 {
            rank_used += 1;
            w_pinv += svd.v.column(t) * svd.u.column(t).transpose() / s;
        }
    }
    let x_hat = (&meas.b_col * &w_pinv) * &meas.b_row;
    let runtime_seconds = start.elapsed().as_secs_f64();

    let (row_residual, col_residual) = block_residuals(&x_hat, design, meas);
    Ok(RecoveryResult {
        x_hat,
        rank_used,
        core: Some(w_pinv),
        row_residual,
        col_residual,
        relative_error: None,
        runtime_seconds,
        algorithm: "cur".into(),
        iterations: 0,
        final_objective: Some(row_residual * row_residual + col_residual * col_residual),
        objective_trace: Vec::new(),
    })
}

/// Rank estimate from the two blocks: per block, the count of singular values
/// above `max(2 sigma sqrt(max dim), 1e-10 sigma_1)`; the smaller count wins.
/// Returns 0 for all-zero blocks.
pub fn estimate_rank(b_row: &DenseMatrix, b_col: &DenseMatrix, sigma: f64) -> usize {
    let block = |b: &DenseMatrix| {
        let s = singular_values(b);
        let s1 = s.first().copied().unwrap_or(0.0);
        if s1 <= 0.0 {
            return 0;
        }
        let dim = b.nrows().max(b.ncols()) as f64;
        let cut = (2.0 * sigma * dim.sqrt()).max(1e-10 * s1);
        s.iter().filter(|&&v| v > cut).count()
    };
    block(b_row).min(block(b_col))
}

/// Approximate smallest singular value of a `k x r` standard Gaussian matrix
/// (`k >= r`), floored at the square-case scale `1/sqrt(r)`.
fn gaussian_smin_proxy(k: usize, r: usize) -> f64 {
    let (k, r) = (k as f64, r as f64);
    (k.sqrt() - r.sqrt()).max(1.0 / r.sqrt())
}

/// First-order noise-propagation estimate of `||x_hat - x||_F` for SVLS.
///
/// `sing_vals` are the leading singular values of the target (at least `r` of
/// them, nonincreasing). The estimate combines a Wedin-type subspace
/// perturbation term for each block with the conditioning of the core fit;
/// the restricted singular values `sigma_r(a_row U)` and `sigma_r(V^T a_col)`
/// that depend on the unknown subspaces are replaced by their Gaussian
/// random-subspace proxies. It is `0` at `sigma = 0` and nondecreasing in
/// `sigma`.
pub fn theoretical_bound(
    design: &MeasurementDesign,
    sigma: f64,
    r: usize,
    sing_vals: &[f64],
) -> f64 {
    if !(sigma > 0.0) || r == 0 {
        return 0.0;
    }
    let (m, n, k1, k2) = (
        design.m() as f64,
        design.n() as f64,
        design.k1() as f64,
        design.k2() as f64,
    );
    let s1 = sing_vals.first().copied().unwrap_or(0.0).abs();
    let sr = sing_vals
        .get(r - 1)
        .copied()
        .unwrap_or(0.0)
        .abs()
        .max(f64::MIN_POSITIVE);

    let (rho_row, rho_col) = match design.kind {
        DesignKind::GaussianAffine => (
            gaussian_smin_proxy(design.k1(), r),
            gaussian_smin_proxy(design.k2(), r),
        ),
        DesignKind::RowColSample => (
            (k1 / m).sqrt() / (r as f64).sqrt(),
            (k2 / n).sqrt() / (r as f64).sqrt(),
        ),
    };

    // Spectral-norm scale of each noise block.
    let noise_row = sigma * (k1.sqrt() + n.sqrt());
    let noise_col = sigma * (m.sqrt() + k2.sqrt());
    let sin_u = (noise_col / (sr * rho_col)).min(1.0);
    let sin_v = (noise_row / (sr * rho_row)).min(1.0);
    let subspace = (r as f64).sqrt() * (sin_u + sin_v) * s1;

    let op_norm =
        (spectral_norm(&design.a_row).powi(2) + spectral_norm(&design.a_col).powi(2)).sqrt();
    let noise_frob = sigma * (k1 * n + m * k2).sqrt();
    let restricted = (rho_row * rho_row + rho_col * rho_col).sqrt();
    subspace + (op_norm * subspace + noise_frob) / restricted
}

fn spectral_norm(a: &DenseMatrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Numerical rank of an estimate, for diagnostics.
pub fn estimate_numerical_rank(x_hat: &DenseMatrix) -> usize {
    numerical_rank(x_hat, 1e-10)
}
