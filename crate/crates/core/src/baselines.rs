//! Comparison baselines: singular value projection (iterative hard
//! thresholding) on a dense sensing operator, and alternating least squares on
//! the row/column measurements.

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{standard_normal, symmetric_eigen, truncate_rank, vec_row_major, DenseMatrix};
use crate::measurements::{MeasurementDesign, MeasurementSet};
use crate::svls::{
    block_residuals, estimate_col_space, estimate_row_space, ls_objective, lstsq_min_norm,
    solve_core, RecoveryResult,
};

/// Upper limit on `m * n` for densely materialized operators and systems.
pub const MAX_TARGET_ENTRIES: usize = 100_000;

/// Dense linear map from row-major `vec(X)` (length `m n`) to `k` scalars.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    /// `k x (m n)`.
    pub op: DenseMatrix,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

/// The standard dense Gaussian design.
pub type GaussianOperator = SensingOperator;

fn check_target_size(m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "target shape {m}x{n} must be positive"
        )));
    }
    if m.saturating_mul(n) > MAX_TARGET_ENTRIES {
        return Err(Error::TooLarge(format!(
            "{m}x{n} target exceeds the dense limit of {MAX_TARGET_ENTRIES} entries"
        )));
    }
    Ok(())
}

impl SensingOperator {
    /// `k` flattened sensing matrices with i.i.d. standard normal entries, drawn row-major.
    pub fn gaussian(k: usize, m: usize, n: usize, seed: u64) -> Result<Self> {
        check_target_size(m, n)?;
        if k == 0 {
            return Err(Error::InvalidArgument(
                "operator needs at least one measurement".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            op: standard_normal(k, m * n, &mut rng),
            m,
            n,
            seed,
        })
    }

    pub fn from_matrix(op: DenseMatrix, m: usize, n: usize) -> Result<Self> {
        check_target_size(m, n)?;
        if op.ncols() != m * n || op.nrows() == 0 {
            return Err(Error::Shape(format!(
                "operator of shape {:?} cannot act on a {m}x{n} target",
                op.shape()
            )));
        }
        Ok(Self { op, m, n, seed: 0 })
    }

    /// The row/column design as one operator: rows of `b_row` (row-major),
    /// then rows of `b_col` (row-major).
    pub fn from_design(design: &MeasurementDesign) -> Result<Self> {
        let (m, n, k1, k2) = (design.m(), design.n(), design.k1(), design.k2());
        check_target_size(m, n)?;
        let mut op = DenseMatrix::zeros(k1 * n + m * k2, m * n);
        let mut row = 0;
        for i in 0..k1 {
            for j in 0..n {
                for a in 0..m {
                    op[(row, a * n + j)] = design.a_row[(i, a)];
                }
                row += 1;
            }
        }
        for i in 0..m {
            for j in 0..k2 {
                for b in 0..n {
                    op[(row, i * n + b)] = design.a_col[(b, j)];
                }
                row += 1;
            }
        }
        Ok(Self {
            op,
            m,
            n,
            seed: design.seed,
        })
    }

    pub fn k(&self) -> usize {
        self.op.nrows()
    }

    pub fn apply(&self, x: &DenseMatrix) -> DVector<f64> {
        &self.op * DVector::from_vec(vec_row_major(x))
    }

    /// `A^T y` reshaped to `m x n`.
    pub fn adjoint(&self, y: &DVector<f64>) -> DenseMatrix {
        let v = self.op.tr_mul(y);
        DenseMatrix::from_row_slice(self.m, self.n, v.as_slice())
    }

    /// `A vec(x) + sigma g` with `g` standard normal from `noise_seed`.
    pub fn measure(&self, x: &DenseMatrix, sigma: f64, noise_seed: u64) -> Result<DVector<f64>> {
        if x.shape() != (self.m, self.n) {
            return Err(Error::Shape(format!(
                "operator expects a {}x{} target, got {:?}",
                self.m,
                self.n,
                x.shape()
            )));
        }
        let mut b = self.apply(x);
        if sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
            b += standard_normal(b.len(), 1, &mut rng).column(0) * sigma;
        }
        Ok(b)
    }

    /// `sigma_max(A)^2`, from the smaller of the two Gram matrices.
    pub fn spectral_norm_sq(&self) -> f64 {
        let gram = if self.op.nrows() <= self.op.ncols() {
            &self.op * self.op.transpose()
        } else {
            self.op.transpose() * &self.op
        };
        symmetric_eigen(&gram)
            .0
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `1 / sigma_max(A)^2`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlsInit {
    /// Factors from the SVLS estimate: `L = U M`, `R = V`.
    Svls,
    /// Standard normal factors from the given seed.
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeSolverConfig {
    pub max_iters: usize,
    /// Stop once `||X_{t+1} - X_t||_F / ||X_{t+1}||_F < tol`.
    pub tol: f64,
    pub step_size: StepSize,
    pub als_init: AlsInit,
}

impl Default for IterativeSolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-8,
            step_size: StepSize::Auto,
            als_init: AlsInit::Svls,
        }
    }
}

impl IterativeSolverConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if let StepSize::Fixed(eta) = self.step_size {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "step size must be positive, got {eta}"
                )));
            }
        }
        Ok(())
    }
}

fn relative_change(new: &DenseMatrix, old: &DenseMatrix) -> f64 {
    let diff = (new - old).norm();
    let scale = new.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Singular value projection: `X <- H_r(X - eta A^T (A vec(X) - b))` from `X = 0`,
/// where `H_r` keeps the top `r` singular triplets.
pub fn svp_recover(
    b: &DVector<f64>,
    op: &SensingOperator,
    m: usize,
    n: usize,
    r: usize,
    cfg: &IterativeSolverConfig,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    if (op.m, op.n) != (m, n) {
        return Err(Error::Shape(format!(
            "operator acts on {}x{} targets, requested {m}x{n}",
            op.m, op.n
        )));
    }
    if b.len() != op.k() {
        return Err(Error::Shape(format!(
            "{} measurements for an operator with {} rows",
            b.len(),
            op.k()
        )));
    }
    if r == 0 || r > m.min(n) {
        return Err(Error::InvalidRank {
            rank: r,
            max: m.min(n),
        });
    }

    let start = Instant::now();
    let eta = match cfg.step_size {
        StepSize::Fixed(eta) => eta,
        StepSize::Auto => {
            let l = op.spectral_norm_sq();
            if l > 0.0 {
                1.0 / l
            } else {
                1.0
            }
        }
    };
    let mut x = DenseMatrix::zeros(m, n);
    let mut residual = op.apply(&x) - b;
    let mut trace = vec![residual.norm_squared()];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let step = &x - op.adjoint(&residual) * eta;
        let next = truncate_rank(&step, r);
        let change = relative_change(&next, &x);
        x = next;
        residual = op.apply(&x) - b;
        trace.push(residual.norm_squared());
        if change < cfg.tol {
            break;
        }
    }
    let runtime_seconds = start.elapsed().as_secs_f64();

    let final_residual = residual.norm();
    Ok(RecoveryResult {
        x_hat: x,
        rank_used: r,
        core: None,
        row_residual: final_residual,
        col_residual: 0.0,
        relative_error: None,
        runtime_seconds,
        algorithm: "svp".into(),
        iterations,
        final_objective: Some(final_residual * final_residual),
        objective_trace: trace,
    })
}

/// Least-squares update of the left factor `L` (`m x r`) for fixed `R`.
fn als_left_step(
    right: &DenseMatrix,
    design: &MeasurementDesign,
    meas: &MeasurementSet,
) -> DenseMatrix {
    let (m, n, k1, k2) = (design.m(), design.n(), design.k1(), design.k2());
    let r = right.ncols();
    let ra = right.transpose() * &design.a_col; // r x k2
    let mut sys = DenseMatrix::zeros(k1 * n + m * k2, m * r);
    let mut rhs = DenseMatrix::zeros(k1 * n + m * k2, 1);
    let mut row = 0;
    for i in 0..k1 {
        for j in 0..n {
            for a in 0..m {
                let w = design.a_row[(i, a)];
                for p in 0..r {
                    sys[(row, a * r + p)] = w * right[(j, p)];
                }
            }
            rhs[row] = meas.b_row[(i, j)];
            row += 1;
        }
    }
    for i in 0..m {
        for j in 0..k2 {
            for p in 0..r {
                sys[(row, i * r + p)] = ra[(p, j)];
            }
            rhs[row] = meas.b_col[(i, j)];
            row += 1;
        }
    }
    let flat = lstsq_min_norm(sys, &rhs);
    DenseMatrix::from_row_slice(m, r, flat.as_slice())
}

/// Least-squares update of the right factor `R` (`n x r`) for fixed `L`.
fn als_right_step(
    left: &DenseMatrix,
    design: &MeasurementDesign,
    meas: &MeasurementSet,
) -> DenseMatrix {
    let (m, n, k1, k2) = (design.m(), design.n(), design.k1(), design.k2());
    let r = left.ncols();
    let al = &design.a_row * left; // k1 x r
    let mut sys = DenseMatrix::zeros(k1 * n + m * k2, n * r);
    let mut rhs = DenseMatrix::zeros(k1 * n + m * k2, 1);
    let mut row = 0;
    for i in 0..k1 {
        for j in 0..n {
            for p in 0..r {
                sys[(row, j * r + p)] = al[(i, p)];
            }
            rhs[row] = meas.b_row[(i, j)];
            row += 1;
        }
    }
    for i in 0..m {
        for j in 0..k2 {
            for b in 0..n {
                let w = design.a_col[(b, j)];
                for p in 0..r {
                    sys[(row, b * r + p)] = left[(i, p)] * w;
                }
            }
            rhs[row] = meas.b_col[(i, j)];
            row += 1;
        }
    }
    let flat = lstsq_min_norm(sys, &rhs);
    DenseMatrix::from_row_slice(n, r, flat.as_slice())
}

/// Alternating least squares over `X = L R^T` against both measurement blocks.
pub fn als_recover(
    meas: &MeasurementSet,
    design: &MeasurementDesign,
    r: usize,
    cfg: &IterativeSolverConfig,
) -> Result<RecoveryResult> {
    cfg.validate()?;
    meas.check_against(design)?;
    let (m, n) = (design.m(), design.n());
    check_target_size(m, n)?;
    let max = m.min(n).min(design.k1()).min(design.k2());
    if r == 0 || r > max {
        return Err(Error::InvalidRank { rank: r, max });
    }

    let start = Instant::now();
    let (mut left, mut right) = match cfg.als_init {
        AlsInit::Svls => {
            let u = estimate_col_space(&meas.b_col, r)?;
            let v = estimate_row_space(&meas.b_row, r)?;
            let core = solve_core(&u, &v, design, meas)?;
            (&u.basis * core, v.basis)
        }
        AlsInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let left = standard_normal(m, r, &mut rng);
            (left, standard_normal(n, r, &mut rng))
        }
    };
    let mut x = &left * right.transpose();
    let mut trace = vec![ls_objective(&x, design, meas)];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        left = als_left_step(&right, design, meas);
        trace.push(ls_objective(&(&left * right.transpose()), design, meas));
        right = als_right_step(&left, design, meas);
        let next = &left * right.transpose();
        trace.push(ls_objective(&next, design, meas));
        let change = relative_change(&next, &x);
        x = next;
        if change < cfg.tol {
            break;
        }
    }
    let runtime_seconds = start.elapsed().as_secs_f64();

    let (row_residual, col_residual) = block_residuals(&x, design, meas);
    Ok(RecoveryResult {
        x_hat: x,
        rank_used: r,
        core: None,
        row_residual,
        col_residual,
        relative_error: None,
        runtime_seconds,
        algorithm: "als".into(),
        iterations,
        final_objective: trace.last().copied(),
        objective_trace: trace,
    })
}
