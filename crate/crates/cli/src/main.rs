use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod run_manifest;

/// Single-image texture translation: training, inference, dataset
/// augmentation, evaluation and the long-tail benchmark.
#[derive(Debug, Parser)]
#[command(name = "sitta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on one (content, texture) pair.
    Train(TrainArgs),
    /// Apply a trained model to a content and a texture image.
    Translate(TranslateArgs),
    /// Run an augmentation job file.
    Augment(AugmentArgs),
    /// Compare two image folders.
    Eval(EvalArgs),
    /// Run the synthetic long-tail classification benchmark.
    Bench(BenchArgs),
    /// Write synthetic images.
    GenData(GenDataArgs),
}

/// Training overrides. Explicit flags win over the config file.
#[derive(Debug, Clone, Default, Args)]
struct TrainFlags {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    /// Training side length in pixels (multiple of 8).
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    texture_dim: Option<usize>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    lambda_idt: Option<f64>,
    #[arg(long)]
    lambda_rec: Option<f64>,
    #[arg(long)]
    lambda_kl: Option<f64>,
    #[arg(long)]
    lambda_f: Option<f64>,
    /// Train on plain resized inputs.
    #[arg(long)]
    no_augment: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    texture: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Direction {
    A,
    B,
}

#[derive(Debug, Args)]
struct TranslateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    texture: PathBuf,
    /// Output image (.png or .ppm).
    #[arg(long)]
    out: PathBuf,
    /// Decoder to use.
    #[arg(long, value_enum, default_value = "b")]
    direction: Direction,
    /// Resize both inputs to this side first.
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    /// Job file (flat key = value).
    #[arg(long)]
    job: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Overrides the job's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Fid,
    Lpips,
    Vgg,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Fid => "fid",
            Metric::Lpips => "lpips",
            Metric::Vgg => "vgg",
        })
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    set_a: PathBuf,
    #[arg(long)]
    set_b: PathBuf,
    /// Comma-separated subset of fid, lpips, vgg. Paired metrics match images by sorted name.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "fid,lpips,vgg")]
    metrics: Vec<Metric>,
    /// Report CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Resize every image to this side first.
    #[arg(long)]
    size: Option<usize>,
    /// Seed of the feature backbone.
    #[arg(long, default_value_t = 1234)]
    backbone_seed: u64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Number of classifier seeds (seed, seed+1, ...).
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[arg(long, default_value_t = 64)]
    majority: usize,
    #[arg(long, default_value_t = 1)]
    minority: usize,
    #[arg(long, default_value_t = 50)]
    test_per_class: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, value_delimiter = ',', default_value = "baseline,repeat,sitta,sitta_plus_repeat")]
    compositions: Vec<String>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    /// stripes, dots, checker or noise.
    #[arg(long)]
    texture: String,
    /// Texture of a second domain sharing the silhouettes.
    #[arg(long)]
    texture_b: Option<String>,
    /// disc, blob or leaf.
    #[arg(long, default_value = "leaf")]
    shape: String,
    #[arg(long, default_value_t = 64)]
    side: usize,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Error caused by invalid user input rather than a failed run.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let res = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Translate(a) => commands::translate(a),
        Command::Augment(a) => commands::augment(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::GenData(a) => commands::gen_data(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
