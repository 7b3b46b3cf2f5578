//! Turning a configuration cell into a core run.

use mc_implicit::optimizer::RunStatus;
use mc_implicit::verify::CheckContext;
use mc_implicit::{
    generate_ground_truth, materialize, run, sample_mask, GroundTruth, InitSpec, RunConfig,
    RunOutput,
};
use serde::{Deserialize, Serialize};

use crate::config::{Cell, CellSeeds, ExperimentConfig};
use crate::error::Result;

/// Relative error at which `t_hit` is recorded.
pub const HIT_THRESHOLD: f64 = 1e-3;

/// A fully built problem for one cell.
#[derive(Debug, Clone)]
pub struct CellProblem {
    pub cell: Cell,
    pub seeds: CellSeeds,
    pub alpha: f64,
    pub run_config: RunConfig,
}

impl CellProblem {
    pub fn build(cfg: &ExperimentConfig, cell: &Cell, capture_streams: bool) -> Result<Self> {
        let seeds = cfg.seeds(cell);
        let g = &cfg.ground_truth;
        let gt = generate_ground_truth(
            g.d,
            g.r,
            g.kappa,
            g.sigma1,
            g.basis_style,
            seeds.ground_truth,
        )?;
        let obs = sample_mask(g.d, cell.p, seeds.mask)?;
        Ok(Self::assemble(cfg, cell, seeds, gt, obs, capture_streams))
    }

    pub(crate) fn assemble(
        cfg: &ExperimentConfig,
        cell: &Cell,
        seeds: CellSeeds,
        gt: GroundTruth,
        obs: mc_implicit::ObservationSet,
        capture_streams: bool,
    ) -> Self {
        let alpha = cell.alpha.resolve(&gt);
        let o = &cfg.optimizer;
        let run_config = RunConfig {
            gt,
            obs,
            init: InitSpec {
                scheme: cfg.init.scheme,
                r_prime: cell.r_prime,
                alpha,
                seed: seeds.init,
            },
            eta_rule: o.eta_rule,
            max_iters: o.max_iters,
            stop_tol: o.stop_tol,
            record_every: o.record_every,
            capture_streams,
        };
        Self {
            cell: *cell,
            seeds,
            alpha,
            run_config,
        }
    }

    pub fn gt(&self) -> &GroundTruth {
        &self.run_config.gt
    }

    pub fn check_context(&self, cfg: &ExperimentConfig, eta: f64) -> CheckContext {
        let mut ctx = CheckContext::new(self.gt(), self.cell.p, eta, self.alpha);
        ctx.gamma1 = cfg.diagnostics.check_params.gamma1;
        ctx.c_max = cfg.diagnostics.check_params.c_max;
        ctx
    }

    pub fn execute(&self) -> Result<RunOutput> {
        Ok(run(&self.run_config)?)
    }
}

/// Headline numbers for a finished run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalSummary {
    pub iterations: usize,
    pub status: RunStatus,
    pub eta: f64,
    pub alpha: f64,
    pub xstar_fro: f64,
    pub final_err_fro: f64,
    pub final_rel_err: f64,
    /// First recorded `t` with relative error at most [`HIT_THRESHOLD`].
    pub t_hit: Option<usize>,
    pub max_v_incoh: f64,
    /// `sqrt(4 mu r / d)`.
    pub incoherence_bound: f64,
}

impl FinalSummary {
    pub fn from_output(output: &RunOutput, gt: &GroundTruth, alpha: f64) -> Self {
        let xstar_fro = materialize(gt).norm();
        let last = output.last();
        let t_hit = output
            .trace
            .iter()
            .find(|r| r.err_fro <= HIT_THRESHOLD * xstar_fro)
            .map(|r| r.t);
        let max_v_incoh = output.trace.iter().map(|r| r.v_incoh).fold(0.0, f64::max);
        Self {
            iterations: output.iterations(),
            status: output.status,
            eta: output.eta,
            alpha,
            xstar_fro,
            final_err_fro: last.err_fro,
            final_rel_err: last.err_fro / xstar_fro,
            t_hit,
            max_v_incoh,
            incoherence_bound: (4.0 * gt.mu * gt.r as f64 / gt.d as f64).sqrt(),
        }
    }
}
