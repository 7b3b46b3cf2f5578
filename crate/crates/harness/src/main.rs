use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mc_implicit::loo::LooKind;
use mc_implicit_harness::commands::{
    cmd_concentration, cmd_loo, cmd_run, cmd_sweep, cmd_verify, ConcentrationConfig,
};
use mc_implicit_harness::{ExperimentConfig, HarnessError, Options, Outcome};

/// Gradient descent for symmetric matrix completion from small random
/// initialization, with signal/residual and leave-one-out diagnostics.
///
/// Output goes to --out, or to $MC_IMPLICIT_OUT/<name>, or to
/// ./mc-implicit-out/<name>. Exit codes: 0 success, 1 runtime or I/O error,
/// 2 usage or configuration error, 3 a run diverged, 4 a check failed.
#[derive(Parser, Debug)]
#[command(name = "mc-implicit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the configuration's master seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for sweeps (default: available cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Exit nonzero when an explicit-constant check or baseline comparison fails.
    #[arg(long = "assert", global = true)]
    assert_mode: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a single configuration and write trace.csv, run.json and check reports.
    Run,
    /// Run every cell of the configured grids and write per-run and aggregate CSVs.
    Sweep,
    /// Re-run the trajectory checks on a stored run.json.
    Verify {
        /// Path to run.json.
        artifact: PathBuf,
    },
    /// Run leave-one-out ghosts against a stored run.json.
    Loo {
        /// Path to run.json.
        artifact: PathBuf,
        /// `all`, `sample:k`, or a comma-separated index list.
        #[arg(long)]
        ghosts: Option<String>,
        /// Ghost kinds, comma-separated.
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<KindArg>>,
    },
    /// Estimate the concentration constants of the sampling mask.
    Concentration,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Classical,
    #[value(name = "weakly_coupled", alias = "weakly-coupled")]
    WeaklyCoupled,
}

impl From<KindArg> for LooKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Classical => LooKind::Classical,
            KindArg::WeaklyCoupled => LooKind::WeaklyCoupled,
        }
    }
}

fn require_config(cli: &Cli) -> Result<PathBuf, HarnessError> {
    cli.config
        .clone()
        .ok_or_else(|| HarnessError::usage("--config", "this subcommand needs --config PATH"))
}

fn dispatch(cli: &Cli) -> Result<Outcome, HarnessError> {
    let mut opts = Options::from_env();
    opts.out = cli.out.clone();
    opts.seed = cli.seed;
    opts.assert = cli.assert_mode;
    opts.workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if opts.workers == 0 {
        return Err(HarnessError::usage("--workers", "must be at least 1"));
    }
    let stdout = std::io::stdout();
    let mut log = stdout.lock();
    let outcome = match &cli.command {
        Command::Run => cmd_run(
            ExperimentConfig::load(&require_config(cli)?)?,
            &opts,
            &mut log,
        )?,
        Command::Sweep => cmd_sweep(
            ExperimentConfig::load(&require_config(cli)?)?,
            &opts,
            &mut log,
        )?,
        Command::Verify { artifact } => cmd_verify(artifact, &opts, &mut log)?.0,
        Command::Loo {
            artifact,
            ghosts,
            kinds,
        } => {
            let kinds: Option<Vec<LooKind>> = kinds
                .as_ref()
                .map(|v| v.iter().map(|&k| k.into()).collect());
            cmd_loo(
                artifact,
                ghosts.as_deref(),
                kinds.as_deref(),
                &opts,
                &mut log,
            )?
            .0
        }
        Command::Concentration => {
            let path = require_config(cli)?;
            let cfg = ConcentrationConfig::load(&path)?;
            cmd_concentration(cfg, &path, &opts, &mut log)?.0
        }
    };
    let _ = log.flush();
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                HarnessError::Usage { .. } => 2,
                _ => 1,
            })
        }
    }
}
