//! `scope`: batch driver for contact-filter and joint pose-estimation
//! experiments on synthetic poker-and-tool scenarios.
//!
//! Data goes to files in the output directory; progress goes to stderr.
//! Exit status 0 on success, 2 on a configuration error, 3 on a compute or
//! I/O failure.

mod bundle;
mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::commands::{Models, Run};
use crate::config::{ExperimentConfig, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("{0}")]
    Compute(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "scope", version, about = "Joint in-hand pose and contact estimation experiments")]
struct Cli {
    /// Experiment config (TOML); defaults apply to every key it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// First trial seed; trial k uses seed + k.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Losses in the pair score, letters from P, C, F (e.g. "PCF", "C").
    #[arg(long = "loss-mask", global = true)]
    loss_mask: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Voxelize a mesh and write voxels.scvx, sdf.scvx and surface.csv.
    Preprocess {
        /// OBJ or binary STL mesh in metres.
        mesh: PathBuf,
        /// Voxel edge length (m); defaults to the config's voxel_size.
        #[arg(long)]
        voxel_size: Option<f64>,
    },
    /// Estimate per-axis wrench noise from a steady-state window of a log.
    Calibrate {
        /// Wrench log CSV; defaults to calibrate.log.
        log: Option<PathBuf>,
        /// Window start and end in seconds, e.g. `--window 1.0,3.0`.
        #[arg(long, value_parser = parse_window)]
        window: Option<[f64; 2]>,
    },
    /// Contact localisation trials with a known grasp.
    RunCpfgrasp,
    /// Joint pose and contact estimation trials.
    RunScope,
    /// All seven loss subsets over the same seeds.
    Ablation,
    /// Grid over contact-particle and pose-pair counts.
    Sweep,
}

fn parse_window(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v[..] {
        [t0, t1] if t0 < t1 => Ok([t0, t1]),
        _ => Err(format!("expected T0,T1 with T0 < T1, got {s:?}")),
    }
}

fn load(cli: &Cli) -> Result<(ExperimentConfig, Option<String>), CliError> {
    let (mut cfg, text) = match &cli.config {
        Some(p) => {
            let (c, t) = ExperimentConfig::load(p)?;
            (c, Some(t))
        }
        None => (ExperimentConfig::default(), None),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        trials: cli.trials,
        out: cli.out.clone(),
        jobs: cli.jobs,
        loss_mask: cli.loss_mask.clone(),
    })?;
    Ok((cfg, text))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (cfg, text) = load(&cli)?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| CliError::Compute(format!("thread pool: {e}")))?;
    }
    let run = match cli.command {
        Command::Preprocess { mesh, voxel_size } => {
            return commands::preprocess(&mesh, voxel_size.unwrap_or(cfg.voxel_size), &cfg.out);
        }
        command => {
            let models = match command {
                Command::Calibrate { .. } | Command::Preprocess { .. } => Models::None,
                Command::RunCpfgrasp => Models::Single,
                Command::RunScope | Command::Ablation | Command::Sweep => Models::Pair,
            };
            let run = Run::start(cfg, text.as_deref(), models)?;
            match command {
                Command::Calibrate { log, window } => commands::calibrate(&run, log, window),
                Command::RunCpfgrasp => commands::run_cpfgrasp(&run),
                Command::RunScope => commands::run_scope(&run),
                Command::Ablation => commands::run_ablation(&run),
                Command::Sweep => commands::run_sweep(&run),
                Command::Preprocess { .. } => Ok(()),
            }?;
            run
        }
    };
    eprintln!("results in {}", run.out.root().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
