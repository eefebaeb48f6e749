//! Argument parsing and dispatch for the `errnet` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::Config;
use crate::error::{CliError, Result};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "ERRNET_THREADS";

#[derive(Debug, Parser)]
#[command(name = "errnet", version, about = "Camouflaged object detection at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Shared {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (eval: output CSV file).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset.
    Synth {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        contrast: Option<f64>,
    },
    /// Train on a dataset root; writes loss.csv and model.ckpt.
    Train {
        #[command(flatten)]
        shared: Shared,
        /// Dataset root containing manifest.txt.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        /// Comma-separated training scales.
        #[arg(long)]
        scales: Option<String>,
        /// Continue from a checkpoint with optimiser state.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Write probability maps for every `.ppm` in a folder.
    Predict {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Folder of `.ppm` images, or a dataset root.
        #[arg(long)]
        images: PathBuf,
        /// Also write p_4, p_5, p_g and p_e under `<out>/dump/`.
        #[arg(long)]
        dump_all: bool,
    },
    /// Score a folder of predictions against ground truth.
    Eval {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        pred: PathBuf,
        /// Folder of `.pgm` masks, or a dataset root.
        #[arg(long)]
        gt: PathBuf,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[command(flatten)]
        shared: Shared,
        /// Adds a component with a deliberately wrong backward pass.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn num<T: ToString>(v: Option<T>) -> Option<String> {
    v.map(|x| x.to_string())
}

fn resolve(shared: &Shared, mut flags: Vec<(&'static str, Option<String>)>) -> Result<Config> {
    flags.insert(0, ("seed", num(shared.seed)));
    let cfg = Config::resolve(shared.config.as_deref(), &flags)?;
    eprint!("# effective config\n{}", cfg.echo());
    Ok(cfg)
}

fn out_dir(shared: &Shared, default: &str) -> PathBuf {
    shared.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// Reads `ERRNET_THREADS` and sizes the global rayon pool.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // a second call in one process (tests) finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Synth { shared, count, size, contrast } => {
            let cfg = resolve(&shared, vec![("synth.count", num(count)), ("input_size", num(size)), ("synth.contrast", num(contrast))])?;
            commands::synth(&cfg, &out_dir(&shared, "data"))
        }
        Command::Train { shared, data, lr, epochs, batch, scales, resume } => {
            let cfg = resolve(&shared, vec![("lr", num(lr)), ("epochs", num(epochs)), ("batch", num(batch)), ("scales", scales)])?;
            commands::train(&cfg, &data, &out_dir(&shared, "run"), resume.as_deref())
        }
        Command::Predict { shared, checkpoint, images, dump_all } => {
            let cfg = resolve(&shared, vec![])?;
            commands::predict(&cfg, &checkpoint, &images, &out_dir(&shared, "pred"), dump_all)
        }
        Command::Eval { shared, pred, gt } => {
            resolve(&shared, vec![])?;
            commands::eval(&pred, &gt, &out_dir(&shared, "eval.csv"))
        }
        Command::Gradcheck { shared, inject_fault } => {
            let cfg = resolve(&shared, vec![])?;
            commands::gradcheck(&cfg, inject_fault)
        }
    }
}
