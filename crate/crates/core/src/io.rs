//! On-disk layout of designs, measurement sets, and recovery results.
//!
//! A measurement directory holds `b_row.csv`, `b_col.csv`, `design_a_row.csv`,
//! `design_a_col.csv` and `manifest.json`. A design directory holds the two
//! `design_*.csv` files and its own `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{read_csv, write_csv};
use crate::measurements::{
    measurement_counts, DesignKind, GroundTruth, MeasurementDesign, MeasurementSet,
};

pub const MANIFEST: &str = "manifest.json";
pub const A_ROW: &str = "design_a_row.csv";
pub const A_COL: &str = "design_a_col.csv";
pub const B_ROW: &str = "b_row.csv";
pub const B_COL: &str = "b_col.csv";
pub const X_HAT: &str = "x_hat.csv";
pub const RESULT: &str = "result.json";

/// Sidecar for a ground-truth matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixManifest {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignManifest {
    pub kind: DesignKind,
    pub m: usize,
    pub n: usize,
    pub k1: usize,
    pub k2: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_indices: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementManifest {
    pub kind: DesignKind,
    pub m: usize,
    pub n: usize,
    pub k1: usize,
    pub k2: usize,
    pub sigma: f64,
    pub design_seed: u64,
    pub noise_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_indices: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_indices: Option<Vec<usize>>,
    /// Provenance of the measured matrix, when it came from the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<MatrixManifest>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Sidecar path of a matrix file: same stem, `.json` extension.
pub fn sidecar_path(matrix_path: &Path) -> PathBuf {
    matrix_path.with_extension("json")
}

pub fn write_ground_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    write_csv(path, &truth.x)?;
    write_json(
        &sidecar_path(path),
        &MatrixManifest {
            m: truth.x.nrows(),
            n: truth.x.ncols(),
            rank: truth.rank,
            seed: truth.seed,
        },
    )
}

pub fn write_design(dir: &Path, design: &MeasurementDesign) -> Result<()> {
    create_dir(dir)?;
    write_csv(&dir.join(A_ROW), &design.a_row)?;
    write_csv(&dir.join(A_COL), &design.a_col)?;
    write_json(
        &dir.join(MANIFEST),
        &DesignManifest {
            kind: design.kind,
            m: design.m(),
            n: design.n(),
            k1: design.k1(),
            k2: design.k2(),
            seed: design.seed,
            row_indices: design.row_indices.clone(),
            col_indices: design.col_indices.clone(),
        },
    )
}

fn assemble_design(
    dir: &Path,
    kind: DesignKind,
    dims: (usize, usize, usize, usize),
    seed: u64,
    row_indices: Option<Vec<usize>>,
    col_indices: Option<Vec<usize>>,
) -> Result<MeasurementDesign> {
    let design = MeasurementDesign {
        kind,
        a_row: read_csv(&dir.join(A_ROW))?,
        a_col: read_csv(&dir.join(A_COL))?,
        row_indices,
        col_indices,
        seed,
    };
    let (m, n, k1, k2) = dims;
    if design.a_row.shape() != (k1, m) || design.a_col.shape() != (n, k2) {
        return Err(Error::Shape(format!(
            "{}: operators {:?} and {:?} disagree with manifest (m={m}, n={n}, k1={k1}, k2={k2})",
            dir.display(),
            design.a_row.shape(),
            design.a_col.shape()
        )));
    }
    design.validate()?;
    Ok(design)
}

pub fn read_design(dir: &Path) -> Result<MeasurementDesign> {
    let man: DesignManifest = read_json(&dir.join(MANIFEST))?;
    assemble_design(
        dir,
        man.kind,
        (man.m, man.n, man.k1, man.k2),
        man.seed,
        man.row_indices,
        man.col_indices,
    )
}

pub fn write_measurements(
    dir: &Path,
    design: &MeasurementDesign,
    meas: &MeasurementSet,
    truth: Option<MatrixManifest>,
) -> Result<()> {
    meas.check_against(design)?;
    create_dir(dir)?;
    write_csv(&dir.join(B_ROW), &meas.b_row)?;
    write_csv(&dir.join(B_COL), &meas.b_col)?;
    write_csv(&dir.join(A_ROW), &design.a_row)?;
    write_csv(&dir.join(A_COL), &design.a_col)?;
    write_json(
        &dir.join(MANIFEST),
        &MeasurementManifest {
            kind: design.kind,
            m: design.m(),
            n: design.n(),
            k1: design.k1(),
            k2: design.k2(),
            sigma: meas.sigma,
            design_seed: meas.design_seed,
            noise_seed: meas.noise_seed,
            row_indices: design.row_indices.clone(),
            col_indices: design.col_indices.clone(),
            truth,
        },
    )
}

pub fn read_measurements(dir: &Path) -> Result<(MeasurementSet, MeasurementDesign)> {
    let man: MeasurementManifest = read_json(&dir.join(MANIFEST))?;
    if !(man.sigma.is_finite() && man.sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{}: sigma must be finite and nonnegative",
            dir.display()
        )));
    }
    let design = assemble_design(
        dir,
        man.kind,
        (man.m, man.n, man.k1, man.k2),
        man.design_seed,
        man.row_indices,
        man.col_indices,
    )?;
    let (total, distinct) = measurement_counts(man.kind, man.m, man.n, man.k1, man.k2);
    let meas = MeasurementSet {
        b_row: read_csv(&dir.join(B_ROW))?,
        b_col: read_csv(&dir.join(B_COL))?,
        sigma: man.sigma,
        design_seed: man.design_seed,
        noise_seed: man.noise_seed,
        total_measurements: total,
        distinct_measurements: distinct,
    };
    meas.check_against(&design)?;
    Ok((meas, design))
}
