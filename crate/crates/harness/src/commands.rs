//! The CLI subcommands as library functions.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use mc_implicit::groundtruth::GroundTruth;
use mc_implicit::loo::{LooKind, DEFAULT_BASIN_CONSTANT, DEFAULT_GHOST_COUNT};
use mc_implicit::optimizer::RunStatus;
use mc_implicit::verify::{
    estimate_concentration_constants, explicit_failures, regressions, render_table, run_all_checks,
    BaselineEntry, CheckContext, CheckReport, BASELINE_FACTOR,
};
use mc_implicit::{ObservationSet, RunOutput};
use serde::{Deserialize, Serialize};

use crate::config::{Cell, ExperimentConfig, GhostSelection};
use crate::error::{HarnessError, Result};
use crate::exec::{CellProblem, FinalSummary};
use crate::ghosts::{self, require_streams, LooAnalysis};
use crate::persist::{
    ensure_dir, read_json, trace_csv, write_bytes, write_json, RunArtifact, SigmaStream,
    ARTIFACT_VERSION,
};
use crate::sweep::{aggregates_csv, chart, records_csv, run_sweep, SweepResult};

pub const OUT_ENV: &str = "MC_IMPLICIT_OUT";
pub const DEFAULT_OUT_ROOT: &str = "mc-implicit-out";

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: usize,
    pub assert: bool,
    /// Output root used when `out` is absent; normally `$MC_IMPLICIT_OUT`.
    pub out_root: Option<OsString>,
}

impl Options {
    pub fn from_env() -> Self {
        Self {
            out_root: std::env::var_os(OUT_ENV),
            workers: 1,
            ..Self::default()
        }
    }

    fn dir_for(&self, name: &str) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        let root = self
            .out_root
            .as_ref()
            .filter(|s| !s.is_empty())
            .map_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT), PathBuf::from);
        root.join(name)
    }

    /// `--out`, else `<root>/<output.dir or name>`.
    pub fn output_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.dir_for(cfg.output.dir.as_deref().unwrap_or(&cfg.name))
    }
}

/// How a command finished, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Diverged,
    CheckFailed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Diverged => 3,
            Outcome::CheckFailed => 4,
        }
    }

    fn worst(self, other: Outcome) -> Outcome {
        if self.exit_code() >= other.exit_code() {
            self
        } else {
            other
        }
    }
}

fn apply_seed(mut cfg: ExperimentConfig, opts: &Options) -> ExperimentConfig {
    if let Some(seed) = opts.seed {
        cfg.master_seed = seed;
    }
    cfg
}

/// A completed single run together with its persisted form.
#[derive(Debug, Clone)]
pub struct RunBundle {
    pub problem: CellProblem,
    pub output: RunOutput,
    pub artifact: RunArtifact,
}

impl RunBundle {
    pub fn check_context(&self) -> CheckContext {
        self.problem
            .check_context(&self.artifact.config, self.output.eta)
    }
}

fn wants_weak(cfg: &ExperimentConfig) -> bool {
    cfg.diagnostics
        .loo
        .as_ref()
        .is_some_and(|l| l.kinds.contains(&LooKind::WeaklyCoupled))
}

/// Runs one cell and assembles its artifact. Streams are captured when
/// `capture` is set or the configuration asks for ghosts.
pub fn execute_cell(cfg: &ExperimentConfig, cell: &Cell, capture: bool) -> Result<RunBundle> {
    let capture = capture || cfg.diagnostics.loo.is_some();
    let problem = CellProblem::build(cfg, cell, capture)?;
    let output = problem.execute()?;
    let artifact = artifact_for(cfg, &problem, &output);
    Ok(RunBundle {
        problem,
        output,
        artifact,
    })
}

fn artifact_for(cfg: &ExperimentConfig, problem: &CellProblem, output: &RunOutput) -> RunArtifact {
    let sigma_stream = if wants_weak(cfg) {
        output
            .streams
            .as_ref()
            .map(|s| SigmaStream::from_matrices(&s.sigma))
    } else {
        None
    };
    RunArtifact {
        artifact_version: ARTIFACT_VERSION,
        config: cfg.clone(),
        cell: problem.cell,
        seeds: problem.seeds,
        ground_truth: problem.gt().to_record(),
        mask: problem.run_config.obs.to_rle(),
        summary: FinalSummary::from_output(output, problem.gt(), problem.alpha),
        failure: output.failure.clone(),
        trace: output.trace.clone(),
        sigma_stream,
    }
}

fn write_checks(dir: &Path, reports: &[CheckReport]) -> Result<String> {
    let table = render_table(reports);
    write_json(&dir.join("checks.json"), &reports)?;
    write_bytes(&dir.join("checks.txt"), table.as_bytes())?;
    Ok(table)
}

fn ghost_settings(
    cfg: &ExperimentConfig,
    ghosts: Option<&str>,
    kinds: Option<&[LooKind]>,
) -> Result<(GhostSelection, Vec<LooKind>, f64)> {
    let spec = cfg.diagnostics.loo.as_ref();
    let selection = match ghosts {
        Some(s) => GhostSelection::parse(s)?,
        None => spec.map_or_else(
            || GhostSelection::Named(format!("sample:{DEFAULT_GHOST_COUNT}")),
            |l| l.ghosts.clone(),
        ),
    };
    let kinds = match kinds {
        Some([]) => return Err(HarnessError::usage("kinds", "list is empty")),
        Some(k) => k.to_vec(),
        None => spec.map_or_else(
            || vec![LooKind::Classical, LooKind::WeaklyCoupled],
            |l| l.kinds.clone(),
        ),
    };
    let basin = spec.map_or(DEFAULT_BASIN_CONSTANT, |l| l.basin_constant);
    Ok((selection, kinds, basin))
}

fn loo_for(
    bundle: &RunBundle,
    selection: &GhostSelection,
    kinds: &[LooKind],
    basin_constant: f64,
    sigma: Option<&[mc_implicit::DenseMatrix]>,
) -> Result<LooAnalysis> {
    let streams = require_streams(bundle.output.streams.as_ref())?;
    let indices = selection.indices(bundle.problem.gt().d, bundle.problem.seeds.ghosts)?;
    ghosts::analyze(
        &bundle.problem,
        bundle.output.eta,
        streams,
        sigma,
        &indices,
        kinds,
        basin_constant,
    )
}

fn loo_outcome(analysis: &LooAnalysis) -> Outcome {
    if analysis.summary.budget_ok() {
        Outcome::Success
    } else {
        Outcome::CheckFailed
    }
}

fn describe_loo(log: &mut dyn Write, a: &LooAnalysis) -> Result<()> {
    let s = &a.summary;
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"));
    let _ = writeln!(
        log,
        "ghosts {:?}: max prox classical {} weakly-coupled {} (target {:.4e}, met: {}), budget violations {}, basin entry t = {}",
        s.indices,
        opt(s.max_prox_classical),
        opt(s.max_prox_weakly_coupled),
        s.prox_target,
        s.prox_target_met.map_or("-".into(), |b| b.to_string()),
        s.budget_violations,
        s.basin_entry_t.map_or("-".into(), |t| t.to_string()),
    );
    Ok(())
}

/// `run`: one cell with all enabled diagnostics.
pub fn cmd_run(cfg: ExperimentConfig, opts: &Options, log: &mut dyn Write) -> Result<Outcome> {
    let cfg = apply_seed(cfg, opts);
    let cells = cfg.cells();
    if cells.len() != 1 {
        return Err(HarnessError::usage(
            "config",
            format!("expands to {} cells; use `sweep` for grids", cells.len()),
        ));
    }
    let bundle = execute_cell(&cfg, &cells[0], false)?;
    let dir = opts.output_dir(&cfg);
    ensure_dir(&dir)?;
    write_bytes(&dir.join("trace.csv"), &trace_csv(&bundle.output.trace)?)?;
    write_json(&dir.join("run.json"), &bundle.artifact)?;

    let s = &bundle.artifact.summary;
    let _ = writeln!(
        log,
        "{}: {} after {} iterations, relative error {:.3e}, eta {:.4e}, alpha {:.3e}",
        cfg.name, s.status, s.iterations, s.final_rel_err, s.eta, s.alpha
    );
    if let Some(w) = bundle.problem.gt().regime_warning() {
        let _ = writeln!(log, "warning: {w}");
    }
    if let Some(f) = &bundle.artifact.failure {
        let _ = writeln!(log, "failure: {f}");
    }

    let mut outcome = if s.status == RunStatus::Diverged {
        Outcome::Diverged
    } else {
        Outcome::Success
    };
    if cfg.diagnostics.checks {
        let reports = run_all_checks(&bundle.output.trace, &bundle.check_context())?;
        let table = write_checks(&dir, &reports)?;
        let _ = write!(log, "{table}");
        if opts.assert && !explicit_failures(&reports).is_empty() {
            outcome = outcome.worst(Outcome::CheckFailed);
        }
    }
    if cfg.diagnostics.loo.is_some() {
        let (selection, kinds, basin) = ghost_settings(&cfg, None, None)?;
        let sigma = bundle.output.streams.as_ref().map(|s| s.sigma.as_slice());
        let analysis = loo_for(&bundle, &selection, &kinds, basin, sigma)?;
        ghosts::write(&dir, &analysis)?;
        describe_loo(log, &analysis)?;
        outcome = outcome.worst(loo_outcome(&analysis));
    }
    let _ = writeln!(log, "wrote {}", dir.display());
    Ok(outcome)
}

/// Files written by [`write_sweep`].
pub const SWEEP_RECORDS: &str = "sweep_records.csv";
pub const SWEEP_SUMMARY: &str = "sweep_summary.csv";

pub fn write_sweep(dir: &Path, cfg: &ExperimentConfig, result: &SweepResult) -> Result<()> {
    ensure_dir(dir)?;
    write_bytes(&dir.join(SWEEP_RECORDS), &records_csv(&result.records)?)?;
    write_bytes(
        &dir.join(SWEEP_SUMMARY),
        &aggregates_csv(&result.aggregates)?,
    )?;
    write_json(&dir.join("config.json"), cfg)?;
    if cfg.output.svg {
        if let Some(svg) = chart(cfg, result) {
            write_bytes(&dir.join("sweep.svg"), svg.as_bytes())?;
        }
    }
    Ok(())
}

/// `sweep`: every cell of the grid, in parallel.
pub fn cmd_sweep(cfg: ExperimentConfig, opts: &Options, log: &mut dyn Write) -> Result<Outcome> {
    let cfg = apply_seed(cfg, opts);
    let result = run_sweep(&cfg, opts.workers)?;
    let dir = opts.output_dir(&cfg);
    write_sweep(&dir, &cfg, &result)?;
    for a in &result.aggregates {
        let _ = writeln!(
            log,
            "p = {:<6} r' = {:<3} alpha = {:<24} n = {:<3} median rel err {:.3e} (IQR {:.3e})",
            a.p, a.r_prime, a.alpha_label, a.n, a.median_rel_err, a.iqr_rel_err
        );
    }
    let _ = writeln!(log, "wrote {}", dir.display());
    Ok(if result.any_diverged() {
        Outcome::Diverged
    } else {
        Outcome::Success
    })
}

fn artifact_problem(art: &RunArtifact, path: &Path, capture: bool) -> Result<CellProblem> {
    let gt = GroundTruth::from_record(&art.ground_truth)?;
    let obs = ObservationSet::from_rle(&art.mask)?;
    if obs.p() != art.cell.p {
        return Err(HarnessError::artifact(
            path,
            "mask rate does not match the cell",
        ));
    }
    Ok(CellProblem::assemble(
        &art.config,
        &art.cell,
        art.seeds,
        gt,
        obs,
        capture,
    ))
}

fn require_full_resolution(art: &RunArtifact, path: &Path) -> Result<()> {
    if art.config.optimizer.record_every != 1 {
        return Err(HarnessError::artifact(
            path,
            format!(
                "trace was recorded every {} iterations; checks need every iteration",
                art.config.optimizer.record_every
            ),
        ));
    }
    Ok(())
}

/// `verify`: the trajectory checks over a stored run.
pub fn cmd_verify(
    artifact: &Path,
    opts: &Options,
    log: &mut dyn Write,
) -> Result<(Outcome, Vec<CheckReport>)> {
    let art = RunArtifact::load(artifact)?;
    require_full_resolution(&art, artifact)?;
    let problem = artifact_problem(&art, artifact, false)?;
    let ctx = problem.check_context(&art.config, art.summary.eta);
    let reports = run_all_checks(&art.trace, &ctx)?;
    let dir = opts.out.clone().unwrap_or_else(|| parent_of(artifact));
    ensure_dir(&dir)?;
    let table = write_checks(&dir, &reports)?;
    let _ = write!(log, "{table}");
    let failures = explicit_failures(&reports);
    if !failures.is_empty() {
        let _ = writeln!(log, "explicit-constant violations: {}", failures.join(", "));
    }
    let outcome = if opts.assert && !failures.is_empty() {
        Outcome::CheckFailed
    } else {
        Outcome::Success
    };
    Ok((outcome, reports))
}

fn parent_of(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// `loo`: ghosts for a stored run. The main run is replayed to recover its
/// iterate streams and must reproduce the stored trace exactly.
pub fn cmd_loo(
    artifact: &Path,
    ghosts_arg: Option<&str>,
    kinds_arg: Option<&[LooKind]>,
    opts: &Options,
    log: &mut dyn Write,
) -> Result<(Outcome, LooAnalysis)> {
    let art = RunArtifact::load(artifact)?;
    let (selection, kinds, basin) = ghost_settings(&art.config, ghosts_arg, kinds_arg)?;
    let sigma = if kinds.contains(&LooKind::WeaklyCoupled) {
        require_full_resolution(&art, artifact)?;
        let stream = art.sigma_stream.as_ref().ok_or_else(|| {
            HarnessError::from(mc_implicit::Error::Missing(format!(
                "{} has no Sigma_t stream; weakly-coupled ghosts need one",
                artifact.display()
            )))
        })?;
        Some(
            stream
                .to_matrices()
                .map_err(|e| HarnessError::artifact(artifact, e))?,
        )
    } else {
        None
    };
    let problem = artifact_problem(&art, artifact, true)?;
    let output = problem.execute()?;
    if output.trace != art.trace {
        return Err(HarnessError::artifact(
            artifact,
            "replaying the stored configuration does not reproduce the stored trace",
        ));
    }
    let bundle = RunBundle {
        problem,
        output,
        artifact: art,
    };
    let analysis = loo_for(&bundle, &selection, &kinds, basin, sigma.as_deref())?;
    let dir = opts
        .out
        .clone()
        .unwrap_or_else(|| parent_of(artifact).join("loo"));
    ensure_dir(&dir)?;
    let files = ghosts::write(&dir, &analysis)?;
    describe_loo(log, &analysis)?;
    let _ = writeln!(
        log,
        "wrote {} ghost files to {}",
        files.len(),
        dir.display()
    );
    Ok((loo_outcome(&analysis), analysis))
}

/// Configuration for the `concentration` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub schema_version: u32,
    pub name: String,
    pub d: usize,
    pub p: f64,
    pub r: usize,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Baseline file, relative to the configuration file.
    #[serde(default)]
    pub baseline: Option<String>,
    #[serde(default = "baseline_factor")]
    pub factor: f64,
}

fn baseline_factor() -> f64 {
    BASELINE_FACTOR
}

impl ConcentrationConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path).map_err(|e| match e {
            HarnessError::Artifact { reason, .. } => {
                let (field, reason) = reason.split_once(": ").unwrap_or((".", &reason));
                HarnessError::usage(field, reason)
            }
            other => other,
        })?;
        if cfg.schema_version != crate::config::SCHEMA_VERSION {
            return Err(HarnessError::usage(
                "schema_version",
                "unsupported schema version",
            ));
        }
        if !(cfg.factor >= 1.0) {
            return Err(HarnessError::usage("factor", "need factor >= 1"));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationOutput {
    pub config: ConcentrationConfig,
    pub reports: Vec<CheckReport>,
    pub regressions: Vec<String>,
}

/// `concentration`: Monte-Carlo constants for the mask statements, compared
/// against a stored baseline when one is configured.
pub fn cmd_concentration(
    cfg: ConcentrationConfig,
    config_path: &Path,
    opts: &Options,
    log: &mut dyn Write,
) -> Result<(Outcome, ConcentrationOutput)> {
    let mut cfg = cfg;
    if let Some(seed) = opts.seed {
        cfg.master_seed = seed;
    }
    let reports =
        estimate_concentration_constants(cfg.d, cfg.p, cfg.r, cfg.trials, cfg.master_seed)?;
    let mut regressed = Vec::new();
    if let Some(b) = &cfg.baseline {
        let path = parent_of(config_path).join(b);
        let baseline: Vec<BaselineEntry> = read_json(&path)?;
        regressed = regressions(&reports, &baseline, cfg.factor)?
            .into_iter()
            .map(|r| r.name.clone())
            .collect();
    }
    let dir = opts.dir_for(&cfg.name);
    ensure_dir(&dir)?;
    let table = write_checks(&dir, &reports)?;
    let _ = write!(log, "{table}");
    if !regressed.is_empty() {
        let _ = writeln!(
            log,
            "constants above {}x baseline: {}",
            cfg.factor,
            regressed.join(", ")
        );
    }
    let failed = !regressed.is_empty() || !explicit_failures(&reports).is_empty();
    let out = ConcentrationOutput {
        config: cfg,
        reports,
        regressions: regressed,
    };
    write_json(&dir.join("concentration.json"), &out)?;
    let _ = writeln!(log, "wrote {}", dir.display());
    let outcome = if opts.assert && failed {
        Outcome::CheckFailed
    } else {
        Outcome::Success
    };
    Ok((outcome, out))
}
