//! Ground-truth generation, measurement designs, and the row/column
//! measurement operator.
//!
//! Every random quantity is drawn from a [`ChaCha8Rng`] seeded with
//! `seed_from_u64`, filling matrices row-major. Within one call the stream is
//! consumed in a fixed order: left factor before right factor, `a_row` before
//! `a_col`, noise on `b_row` before noise on `b_col`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_finite, standard_normal, DenseMatrix};

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub x: DenseMatrix,
    pub rank: usize,
    pub left_factor: DenseMatrix,
    pub right_factor: DenseMatrix,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DesignKind {
    /// Dense i.i.d. standard normal `a_row` and `a_col`.
    GaussianAffine,
    /// 0/1 selection of `k1` rows and `k2` columns.
    RowColSample,
}

impl DesignKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DesignKind::GaussianAffine => "GaussianAffine",
            DesignKind::RowColSample => "RowColSample",
        }
    }
}

impl std::fmt::Display for DesignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "GaussianAffine" | "gaussian-affine" | "gaussian" => Ok(DesignKind::GaussianAffine),
            "RowColSample" | "row-col-sample" | "rowcol" => Ok(DesignKind::RowColSample),
            other => Err(Error::InvalidArgument(format!(
                "unknown design kind {other:?}"
            ))),
        }
    }
}

/// Sensing operators `a_row` (`k1 x m`) and `a_col` (`n x k2`).
#[derive(Debug, Clone)]
pub struct MeasurementDesign {
    pub kind: DesignKind,
    pub a_row: DenseMatrix,
    pub a_col: DenseMatrix,
    pub row_indices: Option<Vec<usize>>,
    pub col_indices: Option<Vec<usize>>,
    pub seed: u64,
}

impl MeasurementDesign {
    /// Target row count `m`.
    pub fn m(&self) -> usize {
        self.a_row.ncols()
    }

    /// Target column count `n`.
    pub fn n(&self) -> usize {
        self.a_col.nrows()
    }

    pub fn k1(&self) -> usize {
        self.a_row.nrows()
    }

    pub fn k2(&self) -> usize {
        self.a_col.ncols()
    }

    /// Checks the structural invariants of the design kind.
    pub fn validate(&self) -> Result<()> {
        check_finite(&self.a_row, "a_row")?;
        check_finite(&self.a_col, "a_col")?;
        match self.kind {
            DesignKind::GaussianAffine => {
                if self.row_indices.is_some() || self.col_indices.is_some() {
                    return Err(Error::InvalidDesign(
                        "GaussianAffine design must not carry index lists".into(),
                    ));
                }
            }
            DesignKind::RowColSample => {
                let rows = self.row_indices.as_deref().ok_or_else(|| {
                    Error::InvalidDesign("RowColSample design without row_indices".into())
                })?;
                let cols = self.col_indices.as_deref().ok_or_else(|| {
                    Error::InvalidDesign("RowColSample design without col_indices".into())
                })?;
                check_indices(rows, self.m(), "row")?;
                check_indices(cols, self.n(), "col")?;
                if rows.len() != self.k1() || cols.len() != self.k2() {
                    return Err(Error::InvalidDesign(
                        "index list lengths disagree with operator shapes".into(),
                    ));
                }
                if selection_rows(rows, self.m()) != self.a_row
                    || selection_rows(cols, self.n()).transpose() != self.a_col
                {
                    return Err(Error::InvalidDesign(
                        "operators are not the selection matrices of the index lists".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_indices(idx: &[usize], bound: usize, what: &str) -> Result<()> {
    let mut seen = vec![false; bound];
    for &i in idx {
        if i >= bound {
            return Err(Error::InvalidDesign(format!(
                "{what} index {i} out of range 0..{bound}"
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidDesign(format!("duplicate {what} index {i}")));
        }
    }
    Ok(())
}

/// `k x d` matrix whose row `t` is the unit vector `e_{idx[t]}`.
fn selection_rows(idx: &[usize], d: usize) -> DenseMatrix {
    let mut s = DMatrix::zeros(idx.len(), d);
    for (t, &i) in idx.iter().enumerate() {
        s[(t, i)] = 1.0;
    }
    s
}

/// Observed blocks `b_row = a_row X + Z_row` and `b_col = X a_col + Z_col`.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub b_row: DenseMatrix,
    pub b_col: DenseMatrix,
    pub sigma: f64,
    pub design_seed: u64,
    pub noise_seed: u64,
    /// `k1 n + m k2`, every scalar observation.
    pub total_measurements: usize,
    /// Observations counting the doubly observed overlap block once under
    /// sampling designs; equal to `total_measurements` otherwise.
    pub distinct_measurements: usize,
}

impl MeasurementSet {
    pub fn m(&self) -> usize {
        self.b_col.nrows()
    }

    pub fn n(&self) -> usize {
        self.b_row.ncols()
    }

    /// Checks block shapes against `design`.
    pub fn check_against(&self, design: &MeasurementDesign) -> Result<()> {
        let (m, n, k1, k2) = (design.m(), design.n(), design.k1(), design.k2());
        if self.b_row.shape() != (k1, n) || self.b_col.shape() != (m, k2) {
            return Err(Error::Shape(format!(
                "measurement blocks b_row {:?}, b_col {:?} do not match design \
                 (k1={k1}, n={n}, m={m}, k2={k2})",
                self.b_row.shape(),
                self.b_col.shape()
            )));
        }
        Ok(())
    }
}

/// Counts `(total, distinct)` scalar observations for a design.
pub fn measurement_counts(
    kind: DesignKind,
    m: usize,
    n: usize,
    k1: usize,
    k2: usize,
) -> (usize, usize) {
    let total = k1 * n + k2 * m;
    let distinct = match kind {
        DesignKind::RowColSample => total - k1 * k2,
        DesignKind::GaussianAffine => total,
    };
    (total, distinct)
}

/// Rank-`r` matrix `X = L R^T` with standard normal factors.
pub fn gen_low_rank(m: usize, n: usize, r: usize, seed: u64) -> Result<GroundTruth> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "matrix shape {m}x{n} must be positive"
        )));
    }
    if r == 0 || r > m.min(n) {
        return Err(Error::InvalidRank {
            rank: r,
            max: m.min(n),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let left_factor = standard_normal(m, r, &mut rng);
    let right_factor = standard_normal(n, r, &mut rng);
    let x = &left_factor * right_factor.transpose();
    Ok(GroundTruth {
        x,
        rank: r,
        left_factor,
        right_factor,
        seed,
    })
}

pub fn gen_design(
    kind: DesignKind,
    m: usize,
    n: usize,
    k1: usize,
    k2: usize,
    seed: u64,
) -> Result<MeasurementDesign> {
    if m == 0 || n == 0 || k1 == 0 || k2 == 0 {
        return Err(Error::InvalidDesign(format!(
            "dimensions must be positive (m={m}, n={n}, k1={k1}, k2={k2})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        DesignKind::GaussianAffine => {
            let a_row = standard_normal(k1, m, &mut rng);
            let a_col = standard_normal(n, k2, &mut rng);
            Ok(MeasurementDesign {
                kind,
                a_row,
                a_col,
                row_indices: None,
                col_indices: None,
                seed,
            })
        }
        DesignKind::RowColSample => {
            if k1 > m || k2 > n {
                return Err(Error::InvalidDesign(format!(
                    "cannot sample k1={k1} of m={m} rows and k2={k2} of n={n} columns"
                )));
            }
            let rows = partial_shuffle(m, k1, &mut rng);
            let cols = partial_shuffle(n, k2, &mut rng);
            Ok(MeasurementDesign {
                kind,
                a_row: selection_rows(&rows, m),
                a_col: selection_rows(&cols, n).transpose(),
                row_indices: Some(rows),
                col_indices: Some(cols),
                seed,
            })
        }
    }
}

/// First `k` entries of a Fisher-Yates shuffle of `0..d`, returned sorted.
fn partial_shuffle<R: Rng>(d: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..d).collect();
    for i in 0..k {
        let j = rng.random_range(i..d);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    pool
}

pub fn measure(
    x: &DenseMatrix,
    design: &MeasurementDesign,
    sigma: f64,
    noise_seed: u64,
) -> Result<MeasurementSet> {
    let (m, n) = x.shape();
    if design.m() != m || design.n() != n {
        return Err(Error::Shape(format!(
            "design expects a {}x{} target, got {m}x{n}",
            design.m(),
            design.n()
        )));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise level must be finite and nonnegative, got {sigma}"
        )));
    }
    check_finite(x, "x")?;

    let mut b_row = &design.a_row * x;
    let mut b_col = x * &design.a_col;
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        b_row += standard_normal(b_row.nrows(), b_row.ncols(), &mut rng) * sigma;
        b_col += standard_normal(b_col.nrows(), b_col.ncols(), &mut rng) * sigma;
    }
    let (total, distinct) = measurement_counts(design.kind, m, n, design.k1(), design.k2());
    Ok(MeasurementSet {
        b_row,
        b_col,
        sigma,
        design_seed: design.seed,
        noise_seed,
        total_measurements: total,
        distinct_measurements: distinct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::singular_values;
    use proptest::prelude::*;

    fn triple_loop(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut c = DMatrix::zeros(a.nrows(), b.ncols());
        for i in 0..a.nrows() {
            for j in 0..b.ncols() {
                let mut acc = 0.0;
                for t in 0..a.ncols() {
                    acc += a[(i, t)] * b[(t, j)];
                }
                c[(i, j)] = acc;
            }
        }
        c
    }

    #[test]
    fn scalar_ground_truth() {
        let g = gen_low_rank(1, 1, 1, 42).unwrap();
        assert_eq!(g.x[(0, 0)], g.left_factor[(0, 0)] * g.right_factor[(0, 0)]);
        assert_eq!(g.rank, 1);
    }

    #[test]
    fn ground_truth_rank_is_forced() {
        let g = gen_low_rank(5, 4, 2, 7).unwrap();
        let s = singular_values(&g.x);
        assert!(s[2] < 1e-10 * s[0]);
        assert!(s[1] > 1e-3 * s[0]);
        let rebuilt = &g.left_factor * g.right_factor.transpose();
        assert!((rebuilt - &g.x).norm() <= 1e-12 * g.x.norm());
    }

    #[test]
    fn ground_truth_is_deterministic() {
        let a = gen_low_rank(8, 8, 3, 1).unwrap();
        let b = gen_low_rank(8, 8, 3, 1).unwrap();
        assert_eq!(a.x, b.x);
        assert_ne!(a.x, gen_low_rank(8, 8, 3, 2).unwrap().x);
    }

    #[test]
    fn rank_above_min_dimension_rejected() {
        assert!(matches!(
            gen_low_rank(3, 2, 3, 0),
            Err(Error::InvalidRank { .. })
        ));
        assert!(matches!(
            gen_low_rank(3, 2, 0, 0),
            Err(Error::InvalidRank { .. })
        ));
    }

    #[test]
    fn sampling_design_structure() {
        let d = gen_design(DesignKind::RowColSample, 3, 3, 1, 1, 11).unwrap();
        assert_eq!(d.a_row.shape(), (1, 3));
        assert_eq!(d.a_col.shape(), (3, 1));
        assert_eq!(d.a_row.sum(), 1.0);
        assert_eq!(d.a_col.sum(), 1.0);
        let i = d.row_indices.as_ref().unwrap()[0];
        assert_eq!(d.a_row[(0, i)], 1.0);
        d.validate().unwrap();
    }

    #[test]
    fn sampled_indices_are_distinct() {
        for seed in 0..50 {
            let d = gen_design(DesignKind::RowColSample, 10, 7, 6, 7, seed).unwrap();
            d.validate().unwrap();
            let mut rows = d.row_indices.clone().unwrap();
            rows.dedup();
            assert_eq!(rows.len(), 6);
            assert_eq!(d.col_indices.as_ref().unwrap(), &(0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn gaussian_design_is_dense_and_reproducible() {
        let a = gen_design(DesignKind::GaussianAffine, 4, 4, 2, 2, 3).unwrap();
        let b = gen_design(DesignKind::GaussianAffine, 4, 4, 2, 2, 3).unwrap();
        assert_eq!(a.a_row.shape(), (2, 4));
        assert_eq!(a.a_col.shape(), (4, 2));
        assert!(a.a_row.iter().all(|v| *v != 0.0));
        assert_eq!(a.a_row, b.a_row);
        assert_eq!(a.a_col, b.a_col);
        assert!(a.row_indices.is_none());
        a.validate().unwrap();
    }

    #[test]
    fn oversampling_rejected() {
        assert!(matches!(
            gen_design(DesignKind::RowColSample, 2, 2, 3, 1, 0),
            Err(Error::InvalidDesign(_))
        ));
    }

    #[test]
    fn identity_selection() {
        let x = DenseMatrix::identity(2, 2);
        let design = MeasurementDesign {
            kind: DesignKind::RowColSample,
            a_row: DenseMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            a_col: DenseMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            row_indices: Some(vec![0]),
            col_indices: Some(vec![0]),
            seed: 0,
        };
        design.validate().unwrap();
        let meas = measure(&x, &design, 0.0, 0).unwrap();
        assert_eq!(meas.b_row.as_slice(), &[1.0, 0.0]);
        assert_eq!(meas.b_col.as_slice(), &[1.0, 0.0]);
        assert_eq!(meas.total_measurements, 4);
        assert_eq!(meas.distinct_measurements, 3);
    }

    #[test]
    fn noiseless_blocks_match_triple_loop() {
        let g = gen_low_rank(7, 5, 2, 3).unwrap();
        let d = gen_design(DesignKind::GaussianAffine, 7, 5, 3, 4, 4).unwrap();
        let meas = measure(&g.x, &d, 0.0, 99).unwrap();
        assert!((meas.b_row.clone() - triple_loop(&d.a_row, &g.x)).amax() < 1e-12);
        assert!((meas.b_col.clone() - triple_loop(&g.x, &d.a_col)).amax() < 1e-12);
    }

    #[test]
    fn noise_is_seeded() {
        let g = gen_low_rank(6, 6, 2, 3).unwrap();
        let d = gen_design(DesignKind::RowColSample, 6, 6, 2, 2, 4).unwrap();
        let a = measure(&g.x, &d, 0.1, 5).unwrap();
        let b = measure(&g.x, &d, 0.1, 5).unwrap();
        let c = measure(&g.x, &d, 0.1, 6).unwrap();
        assert_eq!(a.b_row, b.b_row);
        assert_eq!(a.b_col, b.b_col);
        assert_ne!(a.b_row, c.b_row);
    }

    #[test]
    fn shape_mismatch_and_bad_sigma() {
        let d = gen_design(DesignKind::GaussianAffine, 4, 4, 2, 2, 0).unwrap();
        let x = DenseMatrix::zeros(4, 5);
        assert!(matches!(measure(&x, &d, 0.0, 0), Err(Error::Shape(_))));
        let x = DenseMatrix::zeros(4, 4);
        assert!(measure(&x, &d, -1.0, 0).is_err());
        assert!(measure(&x, &d, f64::NAN, 0).is_err());
    }

    #[test]
    fn validate_catches_tampered_selection() {
        let mut d = gen_design(DesignKind::RowColSample, 5, 5, 2, 2, 1).unwrap();
        d.a_row[(0, 0)] += 0.5;
        assert!(d.validate().is_err());
        let mut d = gen_design(DesignKind::RowColSample, 5, 5, 2, 2, 1).unwrap();
        d.row_indices = Some(vec![1, 1]);
        assert!(d.validate().is_err());
    }

    proptest! {
        #[test]
        fn measurement_is_linear(
            seed in any::<u64>(),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
            m in 1usize..6,
            n in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = standard_normal(m, n, &mut rng);
            let y = standard_normal(m, n, &mut rng);
            let d = gen_design(DesignKind::GaussianAffine, m, n, 2, 3, seed ^ 1).unwrap();
            let lhs = measure(&(&x * alpha + &y * beta), &d, 0.0, 0).unwrap();
            let mx = measure(&x, &d, 0.0, 0).unwrap();
            let my = measure(&y, &d, 0.0, 0).unwrap();
            prop_assert!((lhs.b_row - (mx.b_row * alpha + my.b_row * beta)).amax() < 1e-12);
            prop_assert!((lhs.b_col - (mx.b_col * alpha + my.b_col * beta)).amax() < 1e-12);
        }

        #[test]
        fn sampled_overlap_blocks_agree(seed in any::<u64>(), k1 in 1usize..6, k2 in 1usize..6) {
            let g = gen_low_rank(6, 6, 2, seed).unwrap();
            let d = gen_design(DesignKind::RowColSample, 6, 6, k1, k2, seed).unwrap();
            let meas = measure(&g.x, &d, 0.0, 0).unwrap();
            let rows = d.row_indices.as_ref().unwrap();
            let cols = d.col_indices.as_ref().unwrap();
            for (a, &i) in rows.iter().enumerate() {
                for (b, &j) in cols.iter().enumerate() {
                    prop_assert_eq!(meas.b_row[(a, j)], g.x[(i, j)]);
                    prop_assert_eq!(meas.b_col[(i, b)], g.x[(i, j)]);
                }
            }
        }
    }
}
