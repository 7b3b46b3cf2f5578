//! Grid sweeps: per-cell records, per-group aggregates, and their CSV forms.

use mc_implicit::optimizer::RunStatus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AlphaSpec, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::exec::{CellProblem, FinalSummary};
use crate::persist::{finish, fmt_f64, parse_f64};

/// One run of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub p: f64,
    pub r_prime: usize,
    /// `alpha` as configured: a number, or `theorem:c` for the rule.
    pub alpha_label: String,
    /// The resolved initialization scale.
    pub alpha: f64,
    pub replicate: usize,
    pub gt_seed: u64,
    pub mask_seed: u64,
    pub init_seed: u64,
    pub eta: f64,
    pub iterations: usize,
    pub t_hit: Option<usize>,
    pub final_err_fro: f64,
    pub final_rel_err: f64,
    pub status: RunStatus,
}

pub fn alpha_label(a: &AlphaSpec) -> String {
    match a {
        AlphaSpec::Value(v) => fmt_f64(*v),
        AlphaSpec::Rule { theorem } => format!("theorem:{}", fmt_f64(*theorem)),
    }
}

/// Median and interquartile range of one group of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub p: f64,
    pub r_prime: usize,
    pub alpha_label: String,
    pub n: usize,
    pub n_diverged: usize,
    pub median_rel_err: f64,
    pub q1_rel_err: f64,
    pub q3_rel_err: f64,
    pub iqr_rel_err: f64,
    pub median_iterations: f64,
    /// Median of `t_hit` over the records that reached the threshold.
    pub median_t_hit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepResult {
    pub fn any_diverged(&self) -> bool {
        self.records.iter().any(|r| r.status == RunStatus::Diverged)
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Groups records by `(p, r', alpha_label)` in first-appearance order and
/// summarizes each group.
pub fn aggregate(records: &[SweepRecord]) -> Vec<Aggregate> {
    let mut keys: Vec<(u64, usize, &str)> = Vec::new();
    for r in records {
        let k = (r.p.to_bits(), r.r_prime, r.alpha_label.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(pb, rp, al)| {
            let group: Vec<&SweepRecord> = records
                .iter()
                .filter(|r| r.p.to_bits() == pb && r.r_prime == rp && r.alpha_label == al)
                .collect();
            let errs = sorted(group.iter().map(|r| r.final_rel_err).collect());
            let iters = sorted(group.iter().map(|r| r.iterations as f64).collect());
            let hits = sorted(
                group
                    .iter()
                    .filter_map(|r| r.t_hit.map(|t| t as f64))
                    .collect(),
            );
            let (q1, q3) = (quantile(&errs, 0.25), quantile(&errs, 0.75));
            Aggregate {
                p: f64::from_bits(pb),
                r_prime: rp,
                alpha_label: al.to_string(),
                n: group.len(),
                n_diverged: group
                    .iter()
                    .filter(|r| r.status == RunStatus::Diverged)
                    .count(),
                median_rel_err: quantile(&errs, 0.5),
                q1_rel_err: q1,
                q3_rel_err: q3,
                iqr_rel_err: q3 - q1,
                median_iterations: quantile(&iters, 0.5),
                median_t_hit: (!hits.is_empty()).then(|| quantile(&hits, 0.5)),
            }
        })
        .collect()
}

impl SweepRecord {
    pub fn new(problem: &CellProblem, summary: &FinalSummary) -> Self {
        SweepRecord {
            p: problem.cell.p,
            r_prime: problem.cell.r_prime,
            alpha_label: alpha_label(&problem.cell.alpha),
            alpha: problem.alpha,
            replicate: problem.cell.replicate,
            gt_seed: problem.seeds.ground_truth,
            mask_seed: problem.seeds.mask,
            init_seed: problem.seeds.init,
            eta: summary.eta,
            iterations: summary.iterations,
            t_hit: summary.t_hit,
            final_err_fro: summary.final_err_fro,
            final_rel_err: summary.final_rel_err,
            status: summary.status,
        }
    }
}

/// Runs every cell on a pool of `workers` threads. Records come back in cell
/// order whatever the scheduling.
pub fn run_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<SweepResult> {
    let cells = cfg.cells();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::usage("workers", e.to_string()))?;
    let records: Vec<SweepRecord> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let problem = CellProblem::build(cfg, cell, false)?;
                let output = problem.execute()?;
                let summary = FinalSummary::from_output(&output, problem.gt(), problem.alpha);
                Ok(SweepRecord::new(&problem, &summary))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let aggregates = aggregate(&records);
    Ok(SweepResult {
        records,
        aggregates,
    })
}

pub const RECORD_COLUMNS: [&str; 14] = [
    "p",
    "r_prime",
    "alpha_label",
    "alpha",
    "replicate",
    "gt_seed",
    "mask_seed",
    "init_seed",
    "eta",
    "iterations",
    "t_hit",
    "final_err_fro",
    "final_rel_err",
    "status",
];

pub const AGGREGATE_COLUMNS: [&str; 11] = [
    "p",
    "r_prime",
    "alpha_label",
    "n",
    "n_diverged",
    "median_rel_err",
    "q1_rel_err",
    "q3_rel_err",
    "iqr_rel_err",
    "median_iterations",
    "median_t_hit",
];

fn opt_usize(v: Option<usize>) -> String {
    v.map_or_else(String::new, |t| t.to_string())
}

fn status_str(s: RunStatus) -> String {
    s.to_string()
}

pub fn records_csv(records: &[SweepRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record([
            fmt_f64(r.p),
            r.r_prime.to_string(),
            r.alpha_label.clone(),
            fmt_f64(r.alpha),
            r.replicate.to_string(),
            r.gt_seed.to_string(),
            r.mask_seed.to_string(),
            r.init_seed.to_string(),
            fmt_f64(r.eta),
            r.iterations.to_string(),
            opt_usize(r.t_hit),
            fmt_f64(r.final_err_fro),
            fmt_f64(r.final_rel_err),
            status_str(r.status),
        ])?;
    }
    finish(w)
}

pub fn aggregates_csv(aggs: &[Aggregate]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_COLUMNS)?;
    for a in aggs {
        w.write_record([
            fmt_f64(a.p),
            a.r_prime.to_string(),
            a.alpha_label.clone(),
            a.n.to_string(),
            a.n_diverged.to_string(),
            fmt_f64(a.median_rel_err),
            fmt_f64(a.q1_rel_err),
            fmt_f64(a.q3_rel_err),
            fmt_f64(a.iqr_rel_err),
            fmt_f64(a.median_iterations),
            a.median_t_hit.map_or_else(String::new, fmt_f64),
        ])?;
    }
    finish(w)
}

fn parse_status(s: &str) -> Option<RunStatus> {
    match s {
        "converged" => Some(RunStatus::Converged),
        "max_iters" => Some(RunStatus::MaxIters),
        "diverged" => Some(RunStatus::Diverged),
        _ => None,
    }
}

/// Parses a records CSV produced by [`records_csv`].
pub fn parse_records_csv(bytes: &[u8]) -> std::result::Result<Vec<SweepRecord>, String> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().ne(RECORD_COLUMNS) {
        return Err(format!("unexpected header {headers:?}"));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let bad = |col: &str| format!("row {i}: bad `{col}`");
        let f = |j: usize| parse_f64(&row[j]).ok_or_else(|| bad(RECORD_COLUMNS[j]));
        let u = |j: usize| row[j].parse::<u64>().map_err(|_| bad(RECORD_COLUMNS[j]));
        out.push(SweepRecord {
            p: f(0)?,
            r_prime: u(1)? as usize,
            alpha_label: row[2].to_string(),
            alpha: f(3)?,
            replicate: u(4)? as usize,
            gt_seed: u(5)?,
            mask_seed: u(6)?,
            init_seed: u(7)?,
            eta: f(8)?,
            iterations: u(9)? as usize,
            t_hit: if row[10].is_empty() {
                None
            } else {
                Some(u(10)? as usize)
            },
            final_err_fro: f(11)?,
            final_rel_err: f(12)?,
            status: parse_status(&row[13]).ok_or_else(|| bad("status"))?,
        });
    }
    Ok(out)
}

/// Which axis the chart puts on x: the first of alpha, p, r' that has more
/// than one value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptAxis {
    Alpha,
    P,
    RPrime,
}

pub fn swept_axis(cfg: &ExperimentConfig) -> Option<SweptAxis> {
    if cfg.init.alpha.len() > 1 {
        Some(SweptAxis::Alpha)
    } else if cfg.sampling.p.len() > 1 {
        Some(SweptAxis::P)
    } else if cfg.init.r_prime.len() > 1 {
        Some(SweptAxis::RPrime)
    } else {
        None
    }
}

/// Median final error against the swept axis, one series per r'. For the
/// alpha axis the x value is the mean resolved scale of the group.
pub fn chart(cfg: &ExperimentConfig, result: &SweepResult) -> Option<String> {
    let axis = swept_axis(cfg)?;
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let r_primes = cfg.init.r_prime.values();
    let by_rp = axis != SweptAxis::RPrime;
    let groups: Vec<Option<usize>> = if by_rp {
        r_primes.iter().map(|&r| Some(r)).collect()
    } else {
        vec![None]
    };
    for g in groups {
        let mut pts = Vec::new();
        for a in result
            .aggregates
            .iter()
            .filter(|a| g.is_none_or(|r| a.r_prime == r))
        {
            let x = match axis {
                SweptAxis::Alpha => {
                    let xs: Vec<f64> = result
                        .records
                        .iter()
                        .filter(|r| {
                            r.r_prime == a.r_prime && r.p == a.p && r.alpha_label == a.alpha_label
                        })
                        .map(|r| r.alpha)
                        .collect();
                    xs.iter().sum::<f64>() / xs.len() as f64
                }
                SweptAxis::P => a.p,
                SweptAxis::RPrime => a.r_prime as f64,
            };
            pts.push((x, a.median_rel_err));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let name = g.map_or_else(|| "median".to_string(), |r| format!("r' = {r}"));
        series.push((name, pts));
    }
    let (xlabel, log_x) = match axis {
        SweptAxis::Alpha => ("initialization scale alpha", true),
        SweptAxis::P => ("sampling rate p", false),
        SweptAxis::RPrime => ("search rank r'", false),
    };
    Some(crate::svg::line_chart(
        &cfg.name,
        xlabel,
        "median final relative error",
        &series,
        log_x,
        true,
    ))
}
