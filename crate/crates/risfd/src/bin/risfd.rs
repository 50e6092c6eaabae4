//! Thin CLI over the experiment harness: all logic lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use risfd::experiment::{
    cmd_benchmark, cmd_run, cmd_selftest, cmd_sweep_distance, cmd_sweep_users, resolve_workers,
    ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "risfd", about = "RIS-assisted full-duplex beamforming simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo drops per evaluation point.
    #[arg(long)]
    drops: Option<usize>,
    /// Worker threads (falls back to RIS_FD_OPT_WORKERS, then 1).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for results.csv / result.json / fig*.gp.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded optimizer drops at a fixed configuration.
    Run(CommonArgs),
    /// Sweep the numbers of DL and UL UEs (figure-2 analogue).
    SweepUsers(CommonArgs),
    /// Sweep the BS-RIS distance and RIS size (figure-3 analogue).
    SweepDistance(CommonArgs),
    /// Compare all schemes on paired drops (figure-4 analogue).
    Benchmark(CommonArgs),
    /// Run the invariant self-test table.
    Selftest,
}

fn build_config(args: &CommonArgs) -> Result<ExperimentConfig, risfd::Error> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(drops) = args.drops {
        cfg.drops = drops;
    }
    cfg.workers = resolve_workers(args.workers.or(if cfg.workers > 0 {
        Some(cfg.workers)
    } else {
        None
    }));
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(args: &CommonArgs, f: impl Fn(&ExperimentConfig) -> risfd::Result<()>) -> ExitCode {
    let cfg = match build_config(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("invalid config: {e}");
            return ExitCode::from(2);
        }
    };
    match f(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => dispatch(args, |cfg| cmd_run(cfg, &args.out)),
        Command::SweepUsers(args) => dispatch(args, |cfg| cmd_sweep_users(cfg, &args.out)),
        Command::SweepDistance(args) => dispatch(args, |cfg| cmd_sweep_distance(cfg, &args.out)),
        Command::Benchmark(args) => dispatch(args, |cfg| cmd_benchmark(cfg, &args.out).map(|_| ())),
        Command::Selftest => {
            if cmd_selftest() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
