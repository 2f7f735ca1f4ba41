//! Seeded parameter sweeps over ground truths, designs, noise levels and
//! algorithms.
//!
//! Each trial is a pure function of its parameter tuple and a 64-bit seed. The
//! per-trial seed is derived from `(base_seed, tuple, trial_index)` with
//! SplitMix64 folding (see [`trial_seed`]), so records do not depend on how
//! many threads run the sweep. Records come back in Cartesian-product order
//! (ranks, design kinds, k values, sigmas, algorithms, then trial index).
//!
//! Within a trial the ground truth uses the trial seed itself, the design uses
//! `splitmix64(seed ^ DESIGN_STREAM)` and the noise uses
//! `splitmix64(seed ^ NOISE_STREAM)`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{als_recover, svp_recover, IterativeSolverConfig, SensingOperator};
use crate::error::{Error, Result};
use crate::matrix::format_entry;
use crate::measurements::{gen_design, gen_low_rank, measure, DesignKind};
use crate::svls::{cur_recover, svls_recover, RecoveryResult};

pub const DESIGN_STREAM: u64 = 0x6465_7369_676e; // "design"
pub const NOISE_STREAM: u64 = 0x6e_6f69_7365; // "noise"

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Svls,
    Cur,
    Svp,
    Als,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Svls => "svls",
            Algorithm::Cur => "cur",
            Algorithm::Svp => "svp",
            Algorithm::Als => "als",
        }
    }

    fn code(self) -> u64 {
        match self {
            Algorithm::Svls => 0,
            Algorithm::Cur => 1,
            Algorithm::Svp => 2,
            Algorithm::Als => 3,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svls" => Ok(Algorithm::Svls),
            "cur" => Ok(Algorithm::Cur),
            "svp" => Ok(Algorithm::Svp),
            "als" => Ok(Algorithm::Als),
            other => Err(Error::InvalidArgument(format!(
                "unknown algorithm {other:?}"
            ))),
        }
    }
}

fn default_threshold() -> f64 {
    1e-4
}

fn default_max_iters() -> usize {
    500
}

fn default_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub ranks: Vec<usize>,
    pub design_kinds: Vec<DesignKind>,
    pub k_values: Vec<(usize, usize)>,
    pub sigmas: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default = "default_threshold")]
    pub success_threshold: f64,
    /// Wall-clock timings make output run-dependent; when false the runtime
    /// column is written as zero.
    #[serde(default)]
    pub record_runtime: bool,
    /// Iteration cap for the iterative baselines.
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.m == 0 || self.n == 0 {
            return bad("m and n must be positive");
        }
        if self.ranks.is_empty()
            || self.design_kinds.is_empty()
            || self.k_values.is_empty()
            || self.sigmas.is_empty()
            || self.algorithms.is_empty()
        {
            return bad("every swept list must be nonempty");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if !(self.success_threshold > 0.0) {
            return bad("success_threshold must be positive");
        }
        if self.sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("sigmas must be finite and nonnegative");
        }
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return bad("max_iters must be at least 1 and tol positive");
        }
        Ok(())
    }

    pub fn solver_config(&self) -> IterativeSolverConfig {
        IterativeSolverConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            ..Default::default()
        }
    }

    /// The swept parameter tuples in canonical order.
    pub fn points(&self) -> Vec<TrialPoint> {
        let mut out = Vec::new();
        for &rank in &self.ranks {
            for &design_kind in &self.design_kinds {
                for &(k1, k2) in &self.k_values {
                    for &sigma in &self.sigmas {
                        for &algorithm in &self.algorithms {
                            out.push(TrialPoint {
                                m: self.m,
                                n: self.n,
                                rank,
                                design_kind,
                                k1,
                                k2,
                                sigma,
                                algorithm,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One fully instantiated parameter tuple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialPoint {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub design_kind: DesignKind,
    pub k1: usize,
    pub k2: usize,
    pub sigma: f64,
    pub algorithm: Algorithm,
}

impl TrialPoint {
    fn words(&self) -> [u64; 8] {
        [
            self.m as u64,
            self.n as u64,
            self.rank as u64,
            match self.design_kind {
                DesignKind::GaussianAffine => 0,
                DesignKind::RowColSample => 1,
            },
            self.k1 as u64,
            self.k2 as u64,
            self.sigma.to_bits(),
            self.algorithm.code(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub point: TrialPoint,
    pub trial_index: usize,
    pub seed: u64,
    /// Absent when the trial failed before producing an estimate.
    pub relative_error: Option<f64>,
    pub success: bool,
    pub runtime_seconds: f64,
    pub iterations: usize,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn failed(point: TrialPoint, trial_index: usize, seed: u64, error: String) -> Self {
        Self {
            point,
            trial_index,
            seed,
            relative_error: None,
            success: false,
            runtime_seconds: 0.0,
            iterations: 0,
            error: Some(error),
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `h_0 = splitmix64(base_seed)`, `h_{i+1} = splitmix64(h_i ^ w_i)` over the
/// tuple words `(m, n, rank, kind, k1, k2, sigma bits, algorithm, trial_index)`.
pub fn trial_seed(base_seed: u64, point: &TrialPoint, trial_index: usize) -> u64 {
    point
        .words()
        .iter()
        .chain(std::iter::once(&(trial_index as u64)))
        .fold(splitmix64(base_seed), |h, &w| splitmix64(h ^ w))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSettings {
    pub success_threshold: f64,
    pub solver: IterativeSolverConfig,
}

impl Default for TrialSettings {
    fn default() -> Self {
        Self {
            success_threshold: default_threshold(),
            solver: IterativeSolverConfig::default(),
        }
    }
}

fn recover(point: &TrialPoint, seed: u64, settings: &TrialSettings) -> Result<RecoveryResult> {
    let truth = gen_low_rank(point.m, point.n, point.rank, seed)?;
    let design_seed = splitmix64(seed ^ DESIGN_STREAM);
    let noise_seed = splitmix64(seed ^ NOISE_STREAM);
    let result = if point.algorithm == Algorithm::Svp {
        // Budget parity with the row/column design.
        let k = point.k1 * point.n + point.k2 * point.m;
        let op = SensingOperator::gaussian(k, point.m, point.n, design_seed)?;
        let b = op.measure(&truth.x, point.sigma, noise_seed)?;
        svp_recover(&b, &op, point.m, point.n, point.rank, &settings.solver)?
    } else {
        let design = gen_design(
            point.design_kind,
            point.m,
            point.n,
            point.k1,
            point.k2,
            design_seed,
        )?;
        let meas = measure(&truth.x, &design, point.sigma, noise_seed)?;
        match point.algorithm {
            Algorithm::Svls => svls_recover(&meas, &design, point.rank)?,
            Algorithm::Cur => cur_recover(&meas, &design)?,
            Algorithm::Als => als_recover(&meas, &design, point.rank, &settings.solver)?,
            Algorithm::Svp => unreachable!(),
        }
    };
    Ok(result.with_truth(&truth.x))
}

/// Runs one trial. Component errors become a failed record.
pub fn run_trial(
    point: &TrialPoint,
    trial_index: usize,
    seed: u64,
    settings: &TrialSettings,
) -> TrialRecord {
    match recover(point, seed, settings) {
        Ok(res) => {
            let err = res.relative_error.unwrap_or(f64::INFINITY);
            TrialRecord {
                point: *point,
                trial_index,
                seed,
                relative_error: res.relative_error,
                success: err < settings.success_threshold,
                runtime_seconds: res.runtime_seconds,
                iterations: res.iterations,
                error: None,
            }
        }
        Err(e) => TrialRecord::failed(*point, trial_index, seed, e.to_string()),
    }
}

/// Sweep using every available core.
pub fn sweep(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    sweep_with_jobs(config, 0)
}

/// `jobs = 0` uses rayon's default thread count.
pub fn sweep_with_jobs(config: &ExperimentConfig, jobs: usize) -> Result<Vec<TrialRecord>> {
    let settings = TrialSettings {
        success_threshold: config.success_threshold,
        solver: config.solver_config(),
    };
    sweep_with(config, jobs, |point, idx, seed| {
        run_trial(point, idx, seed, &settings)
    })
}

/// Sweep with a custom trial function. A panicking trial is recorded as a
/// failure with a `panic:` error tag.
pub fn sweep_with<F>(config: &ExperimentConfig, jobs: usize, trial: F) -> Result<Vec<TrialRecord>>
where
    F: Fn(&TrialPoint, usize, u64) -> TrialRecord + Sync,
{
    config.validate()?;
    let tasks: Vec<(TrialPoint, usize)> = config
        .points()
        .into_iter()
        .flat_map(|p| (0..config.trials).map(move |i| (p, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let run = |(point, idx): &(TrialPoint, usize)| {
        let seed = trial_seed(config.base_seed, point, *idx);
        let mut rec =
            catch_unwind(AssertUnwindSafe(|| trial(point, *idx, seed))).unwrap_or_else(|payload| {
                let msg = payload
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "unknown".into());
                TrialRecord::failed(*point, *idx, seed, format!("panic: {msg}"))
            });
        if !config.record_runtime {
            rec.runtime_seconds = 0.0;
        }
        rec
    };
    Ok(pool.install(|| tasks.par_iter().map(run).collect()))
}

pub const TRIAL_COLUMNS: [&str; 15] = [
    "m",
    "n",
    "rank",
    "design_kind",
    "k1",
    "k2",
    "sigma",
    "algorithm",
    "trial_index",
    "seed",
    "relative_error",
    "success",
    "runtime_seconds",
    "iterations",
    "error",
];

pub const SUMMARY_COLUMNS: [&str; 14] = [
    "m",
    "n",
    "rank",
    "design_kind",
    "k1",
    "k2",
    "sigma",
    "algorithm",
    "trials",
    "failures",
    "success_probability",
    "mean_relative_error",
    "median_relative_error",
    "mean_runtime_seconds",
];

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn point_fields(p: &TrialPoint) -> [String; 8] {
    [
        p.m.to_string(),
        p.n.to_string(),
        p.rank.to_string(),
        p.design_kind.to_string(),
        p.k1.to_string(),
        p.k2.to_string(),
        format_entry(p.sigma),
        p.algorithm.to_string(),
    ]
}

fn opt_entry(v: Option<f64>) -> String {
    v.map(format_entry).unwrap_or_default()
}

pub fn write_records<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(TRIAL_COLUMNS)?;
    for r in records {
        let mut row: Vec<String> = point_fields(&r.point).into();
        row.extend([
            r.trial_index.to_string(),
            r.seed.to_string(),
            opt_entry(r.relative_error),
            r.success.to_string(),
            format_entry(r.runtime_seconds),
            r.iterations.to_string(),
            r.error.clone().unwrap_or_default(),
        ]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut buf = Vec::new();
    write_records(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse().map_err(|_| {
        Error::InvalidArgument(format!(
            "record {line}: invalid {} value {raw:?}",
            TRIAL_COLUMNS[idx]
        ))
    })
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(TRIAL_COLUMNS.iter().copied()) {
        return Err(Error::InvalidArgument(format!(
            "unexpected sweep header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let kind: DesignKind = rec.get(3).unwrap_or("").parse()?;
        let algorithm: Algorithm = rec.get(7).unwrap_or("").parse()?;
        let relative_error = match rec.get(10).unwrap_or("") {
            "" => None,
            _ => Some(field::<f64>(&rec, 10, line)?),
        };
        let error = match rec.get(14).unwrap_or("") {
            "" => None,
            e => Some(e.to_string()),
        };
        out.push(TrialRecord {
            point: TrialPoint {
                m: field(&rec, 0, line)?,
                n: field(&rec, 1, line)?,
                rank: field(&rec, 2, line)?,
                design_kind: kind,
                k1: field(&rec, 4, line)?,
                k2: field(&rec, 5, line)?,
                sigma: field(&rec, 6, line)?,
                algorithm,
            },
            trial_index: field(&rec, 8, line)?,
            seed: field(&rec, 9, line)?,
            relative_error,
            success: field(&rec, 11, line)?,
            runtime_seconds: field(&rec, 12, line)?,
            iterations: field(&rec, 13, line)?,
            error,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub point: TrialPoint,
    pub trials: usize,
    pub failures: usize,
    pub success_probability: f64,
    /// Over trials that produced an estimate.
    pub mean_relative_error: Option<f64>,
    pub median_relative_error: Option<f64>,
    pub mean_runtime_seconds: f64,
}

/// Groups records by parameter tuple, in order of first appearance.
pub fn aggregate(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut index: HashMap<[u64; 8], usize> = HashMap::new();
    let mut groups: Vec<(TrialPoint, Vec<&TrialRecord>)> = Vec::new();
    for r in records {
        let slot = *index.entry(r.point.words()).or_insert_with(|| {
            groups.push((r.point, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(r);
    }
    groups
        .into_iter()
        .map(|(point, recs)| {
            let trials = recs.len();
            let failures = recs.iter().filter(|r| r.error.is_some()).count();
            let successes = recs.iter().filter(|r| r.success).count();
            let mut errs: Vec<f64> = recs.iter().filter_map(|r| r.relative_error).collect();
            errs.sort_by(f64::total_cmp);
            let mean = (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64);
            let median = (!errs.is_empty()).then(|| {
                let h = errs.len() / 2;
                if errs.len() % 2 == 1 {
                    errs[h]
                } else {
                    0.5 * (errs[h - 1] + errs[h])
                }
            });
            SummaryRow {
                point,
                trials,
                failures,
                success_probability: successes as f64 / trials as f64,
                mean_relative_error: mean,
                median_relative_error: median,
                mean_runtime_seconds: recs.iter().map(|r| r.runtime_seconds).sum::<f64>()
                    / trials as f64,
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for s in rows {
        let mut row: Vec<String> = point_fields(&s.point).into();
        row.extend([
            s.trials.to_string(),
            s.failures.to_string(),
            format_entry(s.success_probability),
            opt_entry(s.mean_relative_error),
            opt_entry(s.median_relative_error),
            format_entry(s.mean_runtime_seconds),
        ]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
