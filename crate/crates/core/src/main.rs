//! Command-line entry point: `train`, `eval`, and `crossplay`.

use clap::{Parser, Subcommand};
use mahsac::harness::checkpoint::load_checkpoint;
use mahsac::harness::eval::{cross_play, evaluate_range, EvalSummary};
use mahsac::harness::train::run_training;
use mahsac::harness::{ExperimentConfig, HarnessError};
use mahsac::world::World;
use std::io::Write;
use std::path::PathBuf;

/// Writes to stdout, exiting quietly when the reader hung up (e.g. piped
/// into `head`) and loudly on any real write failure.
fn emit(text: std::fmt::Arguments) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_fmt(text) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {e}");
        std::process::exit(1);
    }
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(format_args!("{}\n", format_args!($($arg)*))) };
}

#[derive(Parser)]
#[command(
    name = "mahsac",
    about = "Multi-agent hybrid-action soft actor-critic on 2-D particle worlds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a team and write metrics plus a rolling checkpoint.
    Train {
        /// Config file; omitted means every default.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Episode-count override.
        #[arg(long)]
        episodes: Option<u64>,
        /// Output directory for metrics and checkpoints.
        #[arg(long, default_value = "runs/default")]
        out: PathBuf,
        /// Resume from an existing checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with deterministic policies.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Episode count; defaults to the checkpoint's eval_episodes.
        #[arg(long)]
        episodes: Option<u64>,
        /// Evaluation seed; defaults to the checkpoint's training seed
        /// (streams keep eval draws disjoint from training draws).
        #[arg(long)]
        seed: Option<u64>,
        /// Also dump per-step entity trajectories to this CSV file.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Pit predator checkpoints against prey checkpoints (full cross
    /// product, one summary row per matchup).
    Crossplay {
        #[arg(long, value_delimiter = ',', required = true)]
        predators: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        prey: Vec<PathBuf>,
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> Result<(), HarnessError> {
    match Cli::parse().command {
        Command::Train {
            config,
            seed,
            episodes,
            out,
            resume,
        } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::parse_file(&path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            let report = run_training(&cfg, &out, resume.as_deref())?;
            outln!(
                "trained {} episodes\nmetrics    {}\ncheckpoint {}",
                report.episodes,
                report.metrics_path.display(),
                report.checkpoint_path.display()
            );
            Ok(())
        }
        Command::Eval {
            checkpoint,
            episodes,
            seed,
            trajectories,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let episodes = episodes.unwrap_or(ckpt.config.eval_episodes);
            let seed = seed.unwrap_or(ckpt.config.seed);
            let mut world = World::new(ckpt.config.scenario_config())?;
            let mut sink: Option<std::io::BufWriter<std::fs::File>> = match &trajectories {
                Some(path) => Some(std::io::BufWriter::new(
                    std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?,
                )),
                None => None,
            };
            let run = evaluate_range(
                &mut world,
                &ckpt.learners,
                seed,
                0,
                episodes,
                ckpt.config.gamma,
                sink.as_mut().map(|s| s as &mut dyn std::io::Write),
            )?;
            let summary = run.summary();
            emit(format_args!("{}", summary.table()));
            outln!("{}", EvalSummary::CSV_HEADER);
            outln!("{}", summary.csv_row());
            Ok(())
        }
        Command::Crossplay {
            predators,
            prey,
            episodes,
            seed,
        } => {
            outln!("predators,prey,{}", EvalSummary::CSV_HEADER);
            for pred_path in &predators {
                let pred = load_checkpoint(pred_path)?;
                for prey_path in &prey {
                    let prey_ckpt = load_checkpoint(prey_path)?;
                    let episodes = episodes.unwrap_or(pred.config.eval_episodes);
                    let seed = seed.unwrap_or(pred.config.seed);
                    let summary = cross_play(&pred, &prey_ckpt, episodes, seed)?;
                    outln!(
                        "{},{},{}",
                        pred_path.display(),
                        prey_path.display(),
                        summary.csv_row()
                    );
                }
            }
            Ok(())
        }
    }
}
