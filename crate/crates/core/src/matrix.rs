//! Dense matrix helpers and the plain-text matrix file format.
//!
//! Matrix files hold one row per line, entries separated by a single comma and
//! rendered with 17 significant digits (lossless for `f64`), every line
//! terminated by `\n`, no header.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Real `rows x cols` matrix. Entries must be finite wherever a matrix enters
/// the library from outside (files, user input); see [`check_finite`].
pub type DenseMatrix = DMatrix<f64>;

/// Fills a `rows x cols` matrix with standard normal draws, row-major.
pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    DenseMatrix::from_row_slice(rows, cols, &data)
}

pub fn check_finite(m: &DenseMatrix, what: &str) -> Result<()> {
    match m.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(k) => Err(Error::NonFinite(format!(
            "{what} entry ({}, {}) is {}",
            k % m.nrows(),
            k / m.nrows(),
            m[k]
        ))),
    }
}

/// Orthogonal projector `B B^T` onto the span of orthonormal columns.
pub fn projector(basis: &DenseMatrix) -> DenseMatrix {
    basis * basis.transpose()
}

/// `||B^T B - I||_F`.
pub fn orthonormality_deviation(basis: &DenseMatrix) -> f64 {
    let gram = basis.transpose() * basis;
    (gram - DenseMatrix::identity(basis.ncols(), basis.ncols())).norm()
}

/// Flips column signs so the largest-magnitude entry of each column is
/// positive. Ties go to the first index.
pub fn sign_normalize_columns(basis: &mut DenseMatrix) {
    for mut col in basis.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Thin SVD `A = U diag(s) V^T` with `p = min(m, n)` triplets, `s` nonincreasing.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

fn to_faer(a: &DenseMatrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, f64>) -> DenseMatrix {
    DenseMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Panics if the input holds non-finite entries.
pub fn thin_svd(a: &DenseMatrix) -> ThinSvd {
    let p = a.nrows().min(a.ncols());
    if p == 0 {
        return ThinSvd {
            u: DenseMatrix::zeros(a.nrows(), 0),
            s: Vec::new(),
            v: DenseMatrix::zeros(a.ncols(), 0),
        };
    }
    let svd = to_faer(a)
        .thin_svd()
        .expect("SVD of a finite matrix converges");
    let s = svd.S().column_vector();
    ThinSvd {
        u: from_faer(svd.U()),
        s: (0..p).map(|i| s[i]).collect(),
        v: from_faer(svd.V()),
    }
}

/// Eigendecomposition of a symmetric matrix: eigenvalues nondecreasing,
/// eigenvectors as columns.
pub fn symmetric_eigen(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    if a.is_empty() {
        return (Vec::new(), DenseMatrix::zeros(0, 0));
    }
    let evd = to_faer(a)
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("eigendecomposition of a finite symmetric matrix converges");
    let s = evd.S().column_vector();
    ((0..a.nrows()).map(|i| s[i]).collect(), from_faer(evd.U()))
}

/// Singular values, nonincreasing.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    to_faer(m)
        .singular_values()
        .expect("SVD of a finite matrix converges")
}

/// Number of singular values strictly above `rel_tol * sigma_1`.
pub fn numerical_rank(m: &DenseMatrix, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&s1) if s1 > 0.0 => s.iter().filter(|&&v| v > rel_tol * s1).count(),
        _ => 0,
    }
}

/// Leading `r` singular triplets `(U_r, s_r, V_r)` with `U_r: m x r`, `V_r: n x r`.
pub(crate) fn truncated_svd(m: &DenseMatrix, r: usize) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let svd = thin_svd(m);
    (
        svd.u.columns(0, r).into_owned(),
        svd.s[..r].to_vec(),
        svd.v.columns(0, r).into_owned(),
    )
}

/// Best rank-`r` approximation (Eckart-Young).
pub(crate) fn truncate_rank(m: &DenseMatrix, r: usize) -> DenseMatrix {
    let r = r.min(m.nrows().min(m.ncols()));
    let (u, s, v) = truncated_svd(m, r);
    let mut us = u;
    for (j, sj) in s.iter().enumerate() {
        us.column_mut(j).scale_mut(*sj);
    }
    us * v.transpose()
}

/// Row-major flattening; the layout used for sensing operators.
pub fn vec_row_major(m: &DenseMatrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Formats one entry with 17 significant digits.
pub fn format_entry(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv_string(m: &DenseMatrix) -> String {
    let mut out = String::with_capacity(m.len() * 24);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{:.16e}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn parse_csv_str(text: &str, origin: &Path) -> Result<DenseMatrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let parse_err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        if line.trim().is_empty() {
            return Err(parse_err("empty line".into()));
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("invalid number {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite entry {field:?}")));
            }
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(parse_err(format!("expected {c} fields, found {width}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse {
        path: origin.to_path_buf(),
        line: 0,
        msg: "empty matrix file".into(),
    })?;
    Ok(DenseMatrix::from_row_slice(rows, cols, &data))
}

pub fn write_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    fs::write(path, to_csv_string(m)).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_str(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn csv_layout_is_exact() {
        let m = DenseMatrix::from_row_slice(2, 2, &[1.0, -0.5, 0.1, 0.125e-300]);
        assert_eq!(
            to_csv_string(&m),
            "1.0000000000000000e0,-5.0000000000000000e-1\n\
             1.0000000000000001e-1,1.2500000000000000e-301\n"
        );
    }

    #[test]
    fn ragged_and_non_finite_rows_rejected() {
        let p = Path::new("x.csv");
        assert!(parse_csv_str("1,2\n3\n", p).is_err());
        assert!(parse_csv_str("1,NaN\n", p).is_err());
        assert!(parse_csv_str("1,inf\n", p).is_err());
        assert!(parse_csv_str("", p).is_err());
        assert!(parse_csv_str("1,,2\n", p).is_err());
    }

    #[test]
    fn sign_normalization_makes_largest_entry_positive() {
        let mut b = DenseMatrix::from_row_slice(3, 2, &[0.1, 0.6, -0.9, -0.8, 0.2, 0.0]);
        sign_normalize_columns(&mut b);
        assert_eq!(b.column(0).as_slice(), &[-0.1, 0.9, -0.2]);
        assert_eq!(b.column(1).as_slice(), &[-0.6, 0.8, 0.0]);
    }

    #[test]
    fn row_major_fill_order() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let m = standard_normal(2, 3, &mut a);
        let first: f64 = b.sample(StandardNormal);
        let second: f64 = b.sample(StandardNormal);
        assert_eq!(m[(0, 0)], first);
        assert_eq!(m[(0, 1)], second);
    }

    #[test]
    fn rank_deficient_tall_svd_reconstructs() {
        // Rank-1 10x2 block on which a Golub-Kahan implementation lost 5% accuracy.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = standard_normal(10, 1, &mut rng) * standard_normal(1, 2, &mut rng);
        let svd = thin_svd(&a);
        let rebuilt = &svd.u
            * DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(svd.s.clone()))
            * svd.v.transpose();
        assert!((rebuilt - &a).norm() < 1e-14 * a.norm());
        assert!(svd.s[1] < 1e-14 * svd.s[0]);
    }

    #[test]
    fn symmetric_eigen_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b = standard_normal(5, 3, &mut rng);
        let a = &b * b.transpose();
        let (vals, vecs) = symmetric_eigen(&a);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let rebuilt = &vecs
            * DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals))
            * vecs.transpose();
        assert!((rebuilt - &a).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn truncation_drops_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = standard_normal(6, 5, &mut rng);
        let t = truncate_rank(&m, 2);
        assert_eq!(numerical_rank(&t, 1e-10), 2);
        let s = singular_values(&m);
        let tail: f64 = s[2..].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(((m - t).norm() - tail).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(
            rows in 1usize..5,
            cols in 1usize..5,
            seed in any::<u64>(),
            scale in -300i32..300,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = standard_normal(rows, cols, &mut rng) * 10f64.powi(scale);
            let back = parse_csv_str(&to_csv_string(&m), Path::new("t")).unwrap();
            prop_assert_eq!(back.shape(), m.shape());
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
