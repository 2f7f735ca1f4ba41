//! Low-rank matrix recovery from row-and-column affine measurements.
//!
//! A rank-`r` target `X` (`m x n`) is observed through two blocks:
//!
//! - `B_row = A_row X + Z_row` (`k1 x n`), linear combinations of the rows of `X`;
//! - `B_col = X A_col + Z_col` (`m x k2`), linear combinations of the columns of `X`.
//!
//! [`svls::svls_recover`] estimates the column space of `X` from the top-`r` left
//! singular vectors of `B_col`, the row space from the top-`r` right singular
//! vectors of `B_row`, and then fits the `r x r` core linking the two bases by
//! least squares over both blocks. For sampling designs (0/1 row and column
//! selections) [`svls::cur_recover`] reconstructs `X = C W^+ R` from the sampled
//! columns, rows, and their overlap.
//!
//! [`baselines`] holds singular value projection on dense Gaussian sensing and an
//! alternating least squares refinement; [`simulate`] runs seeded, parallel
//! parameter sweeps over all of them.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod io;
pub mod matrix;
pub mod measurements;
pub mod simulate;
pub mod svls;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use measurements::{
    gen_design, gen_low_rank, measure, DesignKind, GroundTruth, MeasurementDesign, MeasurementSet,
};
pub use svls::{
    cur_recover, estimate_col_space, estimate_rank, estimate_row_space, solve_core,
    solve_core_bruteforce, svls_recover, theoretical_bound, RecoveryResult, SubspaceBasis,
};
