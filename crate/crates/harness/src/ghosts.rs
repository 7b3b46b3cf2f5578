//! Leave-one-out ghost runs against a recorded main run.

use std::collections::BTreeMap;
use std::path::Path;

use mc_implicit::loo::{
    basin_entry_check, ghost_rows, incoherence_budget, run_classical_loo, run_weakly_coupled_loo,
    GhostRow, IncoherenceBudget, LooGhost, LooKind,
};
use mc_implicit::optimizer::Streams;
use mc_implicit::DenseMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::exec::CellProblem;
use crate::persist::{finish, fmt_f64, write_bytes, write_json};

/// Summary written next to the ghost CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LooSummary {
    pub indices: Vec<usize>,
    pub kinds: Vec<LooKind>,
    pub steps: usize,
    /// `sqrt(mu r / (4d))`.
    pub prox_target: f64,
    pub max_prox_classical: Option<f64>,
    pub max_prox_weakly_coupled: Option<f64>,
    /// Whether the weakly-coupled proximity stayed within `prox_target`.
    pub prox_target_met: Option<bool>,
    pub max_loo_err: Option<f64>,
    pub loo_target_met: Option<bool>,
    /// Steps at which the three-term incoherence budget failed to cover
    /// `||V_t||_{2,inf}`.
    pub budget_violations: usize,
    /// First `t` at which the basin test passed (exact parameterization with
    /// classical ghosts only).
    pub basin_entry_t: Option<usize>,
    pub basin_threshold: Option<f64>,
}

impl LooSummary {
    pub fn budget_ok(&self) -> bool {
        self.budget_violations == 0
    }
}

#[derive(Debug, Clone)]
pub struct LooAnalysis {
    /// Ghost rows keyed by `l`, classical rows first within each key.
    pub rows: BTreeMap<usize, Vec<GhostRow>>,
    pub budget: Vec<IncoherenceBudget>,
    pub summary: LooSummary,
}

fn ordered(kinds: &[LooKind]) -> Vec<LooKind> {
    [LooKind::Classical, LooKind::WeaklyCoupled]
        .into_iter()
        .filter(|k| kinds.contains(k))
        .collect()
}

/// Runs every requested ghost and collects the diagnostics.
///
/// `streams` are the main run's per-iteration states; `sigma` is the stored
/// core-matrix stream and is required for weakly-coupled ghosts.
pub fn analyze(
    problem: &CellProblem,
    eta: f64,
    streams: &Streams,
    sigma: Option<&[DenseMatrix]>,
    indices: &[usize],
    kinds: &[LooKind],
    basin_constant: f64,
) -> Result<LooAnalysis> {
    let kinds = ordered(kinds);
    let gt = problem.gt();
    let steps = streams.len().saturating_sub(1);
    let v_main: Vec<DenseMatrix> = streams.v.iter().map(|v| v.matrix().clone()).collect();

    let mut rows: BTreeMap<usize, Vec<GhostRow>> = BTreeMap::new();
    let mut classical: Vec<LooGhost> = Vec::new();
    let mut weak: Vec<LooGhost> = Vec::new();
    for &l in indices {
        for &kind in &kinds {
            let ghost = match kind {
                LooKind::Classical => run_classical_loo(&problem.run_config, l, steps)?,
                LooKind::WeaklyCoupled => {
                    let sigma = sigma.ok_or_else(|| {
                        mc_implicit::Error::Missing(
                            "weakly-coupled ghosts need the stored Sigma_t stream".into(),
                        )
                    })?;
                    if sigma.len() != streams.len() {
                        return Err(mc_implicit::Error::Missing(format!(
                            "Sigma_t stream has {} entries, run has {}",
                            sigma.len(),
                            streams.len()
                        ))
                        .into());
                    }
                    run_weakly_coupled_loo(sigma, gt, &problem.run_config.obs, eta, l)?
                }
            };
            let main = match kind {
                LooKind::Classical => &streams.u,
                LooKind::WeaklyCoupled => &v_main,
            };
            rows.entry(l)
                .or_default()
                .extend(ghost_rows(&ghost, main, gt)?);
            match kind {
                LooKind::Classical => classical.push(ghost),
                LooKind::WeaklyCoupled => weak.push(ghost),
            }
        }
    }

    let mut budget = Vec::new();
    if !weak.is_empty() {
        for (t, v) in streams.v.iter().enumerate() {
            budget.push(incoherence_budget(v, &weak, gt, t)?);
        }
    }

    let prox_target = (gt.mu * gt.r as f64 / (4.0 * gt.d as f64)).sqrt();
    let max_prox = |kind: LooKind| {
        kinds.contains(&kind).then(|| {
            rows.values()
                .flatten()
                .filter(|r| r.kind == kind)
                .map(|r| r.prox_err)
                .fold(0.0, f64::max)
        })
    };
    let max_prox_weak = max_prox(LooKind::WeaklyCoupled);
    let max_loo_err =
        (!budget.is_empty()).then(|| budget.iter().map(|b| b.loo_err).fold(0.0, f64::max));

    let (mut basin_entry_t, mut basin_threshold) = (None, None);
    if !classical.is_empty() && problem.cell.r_prime == gt.r {
        for (t, u) in streams.u.iter().enumerate() {
            let ghosts_t: Vec<&DenseMatrix> = classical.iter().map(|g| &g.states[t]).collect();
            let entry = basin_entry_check(u, &ghosts_t, gt, problem.cell.p, basin_constant)?;
            basin_threshold = Some(entry.threshold);
            if entry.entered {
                basin_entry_t = Some(t);
                break;
            }
        }
    }

    let summary = LooSummary {
        indices: indices.to_vec(),
        kinds: kinds.clone(),
        steps,
        prox_target,
        max_prox_classical: max_prox(LooKind::Classical),
        max_prox_weakly_coupled: max_prox_weak,
        prox_target_met: max_prox_weak.map(|m| m <= prox_target),
        max_loo_err,
        loo_target_met: max_loo_err.map(|m| m <= prox_target),
        budget_violations: budget.iter().filter(|b| !b.holds(gt.d)).count(),
        basin_entry_t,
        basin_threshold,
    };
    Ok(LooAnalysis {
        rows,
        budget,
        summary,
    })
}

pub const GHOST_COLUMNS: [&str; 6] = ["t", "l", "kind", "prox_err", "loo_row_err", "dist_to_truth"];
pub const BUDGET_COLUMNS: [&str; 10] = [
    "t",
    "loo_err",
    "prox_err",
    "base",
    "bound",
    "actual",
    "actual_covered",
    "covered",
    "loo_target_met",
    "prox_target_met",
];

pub fn ghost_csv(rows: &[GhostRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(GHOST_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.l.to_string(),
            r.kind.to_string(),
            fmt_f64(r.prox_err),
            fmt_f64(r.loo_row_err),
            fmt_f64(r.dist_to_truth),
        ])?;
    }
    finish(w)
}

pub fn budget_csv(budget: &[IncoherenceBudget]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BUDGET_COLUMNS)?;
    for b in budget {
        w.write_record([
            b.t.to_string(),
            fmt_f64(b.loo_err),
            fmt_f64(b.prox_err),
            fmt_f64(b.base),
            fmt_f64(b.bound),
            fmt_f64(b.actual),
            fmt_f64(b.actual_covered),
            b.covered.to_string(),
            b.loo_target_met.to_string(),
            b.prox_target_met.to_string(),
        ])?;
    }
    finish(w)
}

/// Writes `ghost_l{l}.csv` per index, `budget.csv` when weakly-coupled ghosts
/// ran, and `loo_summary.json`. Returns the ghost file names.
pub fn write(dir: &Path, analysis: &LooAnalysis) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for (l, rows) in &analysis.rows {
        let name = format!("ghost_l{l}.csv");
        write_bytes(&dir.join(&name), &ghost_csv(rows)?)?;
        names.push(name);
    }
    if !analysis.budget.is_empty() {
        write_bytes(&dir.join("budget.csv"), &budget_csv(&analysis.budget)?)?;
    }
    write_json(&dir.join("loo_summary.json"), &analysis.summary)?;
    Ok(names)
}

pub(crate) fn require_streams(streams: Option<&Streams>) -> Result<&Streams> {
    streams.ok_or_else(|| {
        HarnessError::usage(
            "diagnostics.loo",
            "the run did not capture its iterate streams",
        )
    })
}
