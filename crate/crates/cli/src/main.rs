use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use salref_cli::pipeline::{self, parse_counts};
use salref_cli::RunConfig;

/// Saliency-based false-positive reduction for 3D lesion detections.
#[derive(Parser)]
#[command(name = "salref", version)]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set saliency.n_samples=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic phantoms with candidate predictions.
    Synth,
    /// Train the voxel scorer on the training cases.
    TrainScorer,
    /// Compute instance-level saliency maps for all predicted lesions.
    Saliency,
    /// Extract radiomic features from the saliency maps.
    Features,
    /// Fit the L1 logistic regression on training-case features.
    TrainLr,
    /// Apply the model to the test cases and report metrics.
    Refine,
    /// Compare saliency statistics between train and test cases.
    Shift,
    /// Print the metrics table; `--counts LABEL=TP,FP,FN` skips the pipeline outputs.
    Report {
        #[arg(long, value_name = "[LABEL=]TP,FP,FN")]
        counts: Vec<String>,
    },
    /// Run every stage in order.
    Run,
    /// Print the effective configuration as JSON.
    Config,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.set)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = Some(w);
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    cfg.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        pool = pool.num_threads(w);
    }
    let pool = pool.build().context("building worker pool")?;
    pool.install(|| dispatch(&cfg, cli.command))
}

fn dispatch(cfg: &RunConfig, command: Command) -> Result<()> {
    match command {
        Command::Synth => {
            pipeline::cmd_synth(cfg)?;
        }
        Command::TrainScorer => {
            pipeline::cmd_train_scorer(cfg)?;
        }
        Command::Saliency => {
            let rows = pipeline::cmd_saliency(cfg)?;
            println!("{} saliency maps", rows.len());
        }
        Command::Features => {
            let v = pipeline::cmd_features(cfg)?;
            println!("{} feature vectors", v.len());
        }
        Command::TrainLr => {
            let m = pipeline::cmd_train_lr(cfg)?;
            println!("{} nonzero weights after {} sweeps", m.nonzero_weights(), m.training.iterations);
        }
        Command::Refine => {
            let r = pipeline::cmd_refine(cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Shift => {
            let r = pipeline::cmd_shift(cfg)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Report { counts } => {
            let counts = counts.iter().map(|c| parse_counts(c)).collect::<Result<Vec<_>>>()?;
            print!("{}", pipeline::cmd_report(cfg, &counts)?);
        }
        Command::Run => {
            pipeline::cmd_run(cfg)?;
            print!("{}", std::fs::read_to_string(cfg.out.join("report.txt"))?);
        }
        Command::Config => println!("{}", serde_json::to_string_pretty(cfg)?),
    }
    Ok(())
}
