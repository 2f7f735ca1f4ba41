//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on runtime errors. Runtime
//! errors print a single `error: ...` line on stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use crate::baselines::{als_recover, svp_recover, IterativeSolverConfig, SensingOperator};
use crate::error::{Error, Result};
use crate::io::{
    read_design, read_json, read_measurements, sidecar_path, write_design, write_ground_truth,
    write_json, write_measurements, MatrixManifest, MeasurementManifest, MANIFEST, RESULT, X_HAT,
};
use crate::matrix::{read_csv, vec_row_major, write_csv};
use crate::measurements::{gen_design, gen_low_rank, measure, DesignKind};
use crate::simulate::{
    aggregate, read_records, sweep_with_jobs, write_records, write_summary, ExperimentConfig,
};
use crate::svls::{cur_recover, estimate_rank, svls_recover};

pub const SEED_ENV: &str = "RC_RECOVER_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "rc-recover",
    version,
    about = "Low-rank recovery from row and column measurements"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    GaussianAffine,
    RowColSample,
}

impl From<KindArg> for DesignKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::GaussianAffine => DesignKind::GaussianAffine,
            KindArg::RowColSample => DesignKind::RowColSample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Svls,
    Cur,
    Svp,
    Als,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankArg {
    Fixed(usize),
    Auto,
}

fn parse_rank(s: &str) -> std::result::Result<RankArg, String> {
    if s == "auto" {
        return Ok(RankArg::Auto);
    }
    match s.parse::<usize>() {
        Ok(0) => Err("rank must be at least 1".into()),
        Ok(r) => Ok(RankArg::Fixed(r)),
        Err(_) => Err(format!("expected a positive integer or `auto`, got {s:?}")),
    }
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("expected a positive integer, got {s:?}")),
    }
}

fn nonneg_real(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("expected a finite nonnegative number, got {s:?}")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a rank-r ground-truth matrix X = L R^T.
    GenMatrix {
        #[arg(long, value_parser = positive)]
        m: usize,
        #[arg(long, value_parser = positive)]
        n: usize,
        #[arg(long, value_parser = positive)]
        rank: usize,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a measurement design.
    GenDesign {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long, value_parser = positive)]
        m: usize,
        #[arg(long, value_parser = positive)]
        n: usize,
        #[arg(long, value_parser = positive)]
        k1: usize,
        #[arg(long, value_parser = positive)]
        k2: usize,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a design to a matrix file, with optional Gaussian noise.
    Measure {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long, value_parser = nonneg_real, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover a low-rank estimate from a measurement directory.
    Recover {
        #[arg(long)]
        meas: PathBuf,
        #[arg(long, value_enum)]
        algo: AlgoArg,
        /// Target rank, or `auto` to estimate it from the blocks.
        #[arg(long, value_parser = parse_rank)]
        rank: RankArg,
        /// Ground-truth matrix for the relative error.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = positive, default_value_t = 500)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Run a parameter sweep from a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses every available core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Aggregate a sweep CSV by parameter tuple.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct RecoverManifest<'a> {
    measurements: &'a Path,
    measurement_manifest: MeasurementManifest,
    algorithm: &'a str,
    rank: String,
    rank_used: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<&'a Path>,
    max_iters: usize,
    tol: f64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenMatrix {
            m,
            n,
            rank,
            seed,
            out,
        } => {
            let truth = gen_low_rank(m, n, rank, seed)?;
            write_ground_truth(&out, &truth)
        }
        Command::GenDesign {
            kind,
            m,
            n,
            k1,
            k2,
            seed,
            out,
        } => {
            let design = gen_design(kind.into(), m, n, k1, k2, seed)?;
            write_design(&out, &design)
        }
        Command::Measure {
            x,
            design,
            sigma,
            noise_seed,
            out,
        } => {
            let matrix = read_csv(&x)?;
            let design = read_design(&design)?;
            let meas = measure(&matrix, &design, sigma, noise_seed)?;
            let sidecar = sidecar_path(&x);
            let truth = if sidecar.exists() {
                Some(read_json::<MatrixManifest>(&sidecar)?)
            } else {
                None
            };
            write_measurements(&out, &design, &meas, truth)
        }
        Command::Recover {
            meas,
            algo,
            rank,
            truth,
            out,
            max_iters,
            tol,
        } => recover(&meas, algo, rank, truth.as_deref(), &out, max_iters, tol),
        Command::Sweep { config, out, jobs } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            let records = sweep_with_jobs(&cfg, jobs)?;
            let file = File::create(&out).map_err(|e| Error::io(&out, e))?;
            write_records(BufWriter::new(file), &records)
        }
        Command::Summarize { input, out } => {
            let file = File::open(&input).map_err(|e| Error::io(&input, e))?;
            let records = read_records(file)?;
            let rows = aggregate(&records);
            let file = File::create(&out).map_err(|e| Error::io(&out, e))?;
            write_summary(BufWriter::new(file), &rows)
        }
    }
}

fn recover(
    meas_dir: &Path,
    algo: AlgoArg,
    rank: RankArg,
    truth: Option<&Path>,
    out: &Path,
    max_iters: usize,
    tol: f64,
) -> Result<()> {
    let (meas, design) = read_measurements(meas_dir)?;
    let r = match rank {
        RankArg::Fixed(r) => r,
        RankArg::Auto => match estimate_rank(&meas.b_row, &meas.b_col, meas.sigma) {
            0 => {
                return Err(Error::InvalidArgument(
                    "estimated rank is 0 (all-zero measurements)".into(),
                ))
            }
            r => r,
        },
    };
    let cfg = IterativeSolverConfig {
        max_iters,
        tol,
        ..Default::default()
    };
    let mut result = match algo {
        AlgoArg::Svls => svls_recover(&meas, &design, r)?,
        AlgoArg::Cur => cur_recover(&meas, &design)?,
        AlgoArg::Als => als_recover(&meas, &design, r, &cfg)?,
        AlgoArg::Svp => {
            let op = SensingOperator::from_design(&design)?;
            let mut b = vec_row_major(&meas.b_row);
            b.extend(vec_row_major(&meas.b_col));
            svp_recover(&DVector::from_vec(b), &op, design.m(), design.n(), r, &cfg)?
        }
    };
    if let Some(path) = truth {
        let x = read_csv(path)?;
        if x.shape() != result.x_hat.shape() {
            return Err(Error::Shape(format!(
                "truth is {:?}, estimate is {:?}",
                x.shape(),
                result.x_hat.shape()
            )));
        }
        result = result.with_truth(&x);
    }

    crate::io::create_dir(out)?;
    write_csv(&out.join(X_HAT), &result.x_hat)?;
    write_json(&out.join(RESULT), &result.summary(X_HAT))?;
    write_json(
        &out.join(MANIFEST),
        &RecoverManifest {
            measurements: meas_dir,
            measurement_manifest: read_json(&meas_dir.join(MANIFEST))?,
            algorithm: &result.algorithm,
            rank: match rank {
                RankArg::Fixed(r) => r.to_string(),
                RankArg::Auto => "auto".into(),
            },
            rank_used: result.rank_used,
            truth,
            max_iters,
            tol,
        },
    )
}
