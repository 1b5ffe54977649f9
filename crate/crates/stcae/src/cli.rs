use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use stcae_core::synth::SynthConfig;

use crate::commands;
use crate::config::{RunConfig, ScoreContext, ScoreStat};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "stcae", version, about = "Fall detection as video anomaly detection with convolutional autoencoders")]
pub struct Cli {
    /// Worker threads for the numeric kernels. Results do not depend on it.
    #[arg(long, global = true, env = "STCAE_THREADS")]
    pub threads: Option<usize>,

    /// More log output; repeat for debug level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print per-video frame and window counts.
    Inspect {
        #[arg(long)]
        data: PathBuf,
        /// Window length in frames.
        #[arg(long, default_value_t = 8)]
        window: usize,
    },
    /// Train a model on the train_adl videos.
    Train(TrainArgs),
    /// Score the test_fall videos with a trained checkpoint.
    Evaluate(EvaluateArgs),
    /// Write the synthetic moving-figure dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset root.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model variant, e.g. dstcae-c3d or cae-upsampling.
    #[arg(long)]
    pub variant: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Warn when frames have more than 5% zero pixels.
    #[arg(long)]
    pub expect_filled: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Force horizontal-flip augmentation on or off.
    #[arg(long)]
    pub augment: Option<bool>,
    /// Also write a checkpoint every N epochs.
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Cross-context (per frame) or within-context (per window) scores.
    #[arg(long, value_enum)]
    pub score: Option<ScoreContext>,
    /// Mean or standard deviation of the reconstruction errors.
    #[arg(long, value_enum)]
    pub stat: Option<ScoreStat>,
    /// Minimum fall frames for a window to count as a fall.
    #[arg(long)]
    pub alpha: Option<usize>,
    /// Report every alpha from 1 to the window length.
    #[arg(long)]
    pub alpha_sweep: bool,
    /// Windows or frames per inference batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_videos: Option<usize>,
    #[arg(long)]
    pub train_frames: Option<usize>,
    #[arg(long)]
    pub test_videos: Option<usize>,
    #[arg(long)]
    pub test_frames: Option<usize>,
}

fn base_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.data {
        cfg.data.root = Some(d.clone());
    }
    if let Some(v) = &common.variant {
        cfg.model.variant = Some(v.clone());
    }
    if let Some(o) = &common.out {
        cfg.output.dir = Some(o.clone());
    }
    cfg.data.expect_filled |= common.expect_filled;
    Ok(cfg)
}

pub fn train_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = base_config(&args.common)?;
    let t = &mut cfg.train;
    t.epochs = args.epochs.or(t.epochs);
    t.batch_size = args.batch_size.or(t.batch_size);
    t.seed = args.seed.or(t.seed);
    t.augment = args.augment.or(t.augment);
    t.checkpoint_interval = args.checkpoint_interval.or(t.checkpoint_interval);
    Ok(cfg)
}

pub fn evaluate_config(args: &EvaluateArgs) -> Result<RunConfig, CliError> {
    let mut cfg = base_config(&args.common)?;
    let e = &mut cfg.eval;
    if let Some(s) = args.score {
        e.score = s;
    }
    if let Some(s) = args.stat {
        e.stat = s;
    }
    e.alpha = args.alpha.or(e.alpha);
    e.alpha_sweep |= args.alpha_sweep;
    if let Some(b) = args.batch_size {
        e.batch_size = b;
    }
    Ok(cfg)
}

/// Runs a parsed command line. Thread pool and logging are set up by the
/// caller.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Inspect { data, window } => commands::inspect(data, *window).map(|_| ()),
        Command::Train(args) => {
            let s = commands::train(&train_config(args)?)?;
            println!(
                "final loss {:.6}; checkpoint {}",
                s.loss_history.last().copied().unwrap_or(f64::NAN),
                s.checkpoint.display()
            );
            Ok(())
        }
        Command::Evaluate(args) => commands::evaluate(&evaluate_config(args)?, &args.checkpoint).map(|_| ()),
        Command::Synth(args) => {
            let d = SynthConfig::default();
            let cfg = SynthConfig {
                seed: args.seed.unwrap_or(d.seed),
                train_videos: args.train_videos.unwrap_or(d.train_videos),
                train_frames: args.train_frames.unwrap_or(d.train_frames),
                test_videos: args.test_videos.unwrap_or(d.test_videos),
                test_frames: args.test_frames.unwrap_or(d.test_frames),
            };
            commands::synth(&args.out, &cfg)?;
            println!("wrote synthetic dataset to {}", args.out.display());
            Ok(())
        }
    }
}
