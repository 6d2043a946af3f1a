//! `reachsched`: plan, abstract, schedule, and simulate self-triggered
//! tracking campaigns from a JSON scenario description.
//!
//! Exit codes: 0 on success, 2 when the scenario is infeasible (no
//! accepting run exists), 1 on config, IO, or stage-order errors.

mod analysis;
mod artifacts;
mod error;
mod pipeline;

use crate::artifacts::{sha256_hex, FileStamp};
use crate::error::{CliError, Result};
use crate::pipeline::StageCtx;
use clap::{Args, Parser, Subcommand, ValueEnum};
use reachsched::scenario::{RunMode, ScenarioConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "reachsched",
    version,
    about = "Communication scheduling for reference tracking under disturbances"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan the reference trajectory (two chained legs in traverse mode).
    Plan(StageArgs),
    /// Build the quantized error abstraction and summarize schedulability.
    Abstract(StageArgs),
    /// Extract the minimum-communication schedule.
    Schedule(StageArgs),
    /// Run the closed loop and collect campaign statistics.
    Simulate(StageArgs),
    /// Compare symbol budgets and/or bisect the disturbance frontier.
    Sweep(SweepArgs),
    /// Grid-check the certificate inequalities over the free space.
    VerifyClf(StageArgs),
}

#[derive(Debug, Args)]
struct StageArgs {
    /// Scenario description (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Artifact directory; defaults to the config's output_dir, then ./out.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Replaces the stage's seed (plan: the planner seed; simulate and
    /// sweep: the campaign seed).
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Replaces the configured runtime mode.
    #[arg(long, value_enum, value_name = "MODE")]
    mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Comma-separated symbol counts to evaluate side by side.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    m_list: Option<Vec<usize>>,
    /// Bisect the largest schedulable disturbance radius, offline and
    /// online-at-start.
    #[arg(long)]
    bisect_wmax: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Offline,
    Online,
    Traverse,
}

impl From<ModeArg> for RunMode {
    fn from(mode: ModeArg) -> RunMode {
        match mode {
            ModeArg::Offline => RunMode::Offline,
            ModeArg::Online => RunMode::Online,
            ModeArg::Traverse => RunMode::Traverse,
        }
    }
}

/// Which config field a `--seed` override lands in.
enum SeedTarget {
    Planner,
    Runtime,
    None,
}

fn stage_ctx(args: StageArgs, seed_target: SeedTarget) -> Result<StageCtx> {
    let bytes = std::fs::read(&args.config).map_err(|source| CliError::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut cfg: ScenarioConfig = serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
        path: args.config.clone(),
        source,
    })?;
    cfg.validate()?;

    let mode_override = args.mode.map(|m| RunMode::from(m).to_string());
    if let Some(mode) = args.mode {
        cfg.runtime.mode = mode.into();
    }
    if let Some(seed) = args.seed {
        match seed_target {
            SeedTarget::Planner => cfg.rrt.seed = seed,
            SeedTarget::Runtime => cfg.runtime.seed = seed,
            SeedTarget::None => {}
        }
    }

    let dir = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;

    let config_stamp = FileStamp {
        name: args
            .config
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| args.config.display().to_string()),
        sha256: sha256_hex(&bytes),
    };
    Ok(StageCtx {
        cfg,
        dir,
        config_stamp,
        seed_override: args.seed,
        mode_override,
    })
}

/// REACHSCHED_THREADS caps the worker pool used for campaigns and sweep
/// fan-out.
fn init_threads() -> Result<()> {
    match std::env::var("REACHSCHED_THREADS") {
        Ok(raw) => {
            let threads: usize = raw.trim().parse().map_err(|_| {
                CliError::Config(format!(
                    "REACHSCHED_THREADS must be a positive integer, got {raw:?}"
                ))
            })?;
            if threads == 0 {
                return Err(CliError::Config(
                    "REACHSCHED_THREADS must be a positive integer, got 0".into(),
                ));
            }
            // The pool can only be configured once; a later failure means
            // it is already running, which is fine.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
            Ok(())
        }
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(err) => Err(CliError::Config(format!("REACHSCHED_THREADS: {err}"))),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan(args) => pipeline::cmd_plan(&stage_ctx(args, SeedTarget::Planner)?),
        Command::Abstract(args) => pipeline::cmd_abstract(&stage_ctx(args, SeedTarget::None)?),
        Command::Schedule(args) => pipeline::cmd_schedule(&stage_ctx(args, SeedTarget::None)?),
        Command::Simulate(args) => pipeline::cmd_simulate(&stage_ctx(args, SeedTarget::Runtime)?),
        Command::Sweep(args) => {
            let ctx = stage_ctx(args.stage, SeedTarget::Runtime)?;
            analysis::cmd_sweep(&ctx, args.m_list, args.bisect_wmax)
        }
        Command::VerifyClf(args) => analysis::cmd_verify_clf(&stage_ctx(args, SeedTarget::None)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Keep exit code 2 reserved for infeasibility; help and
            // version displays are not errors at all.
            let code = if matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) {
                0
            } else {
                1
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if let Err(err) = init_threads() {
        eprintln!("reachsched: {err}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("reachsched: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
