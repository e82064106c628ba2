//! `pointalign`: build triplet proxies from scenes, pretrain the point
//! encoder, classify proxies zero-shot and score the result.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pointalign_core::embedding::DEFAULT_TEMPLATE;
use pointalign_core::evaluation::DEFAULT_DISTANCE_THRESHOLD;
use pointalign_core::proxy::DEFAULT_SCORE_THRESHOLD;
use pointalign_core::ErrorKind;

#[derive(Parser, Debug)]
#[command(
    name = "pointalign",
    version,
    about = "Language-image-point triplet pretraining and zero-shot point recognition"
)]
struct Cli {
    /// Repeat for more log output (info, debug, trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate a synthetic scene set with known objects, labels and embeddings.
    MakeFixture(MakeFixtureArgs),
    /// Extract triplet proxies from scenes and 2D detections.
    Collect(CollectArgs),
    /// Pretrain the point encoder on a triplet file.
    Pretrain(PretrainArgs),
    /// Zero-shot classify the proxies of a triplet file.
    Classify(ClassifyArgs),
    /// Score predictions against labels.
    Evaluate(EvaluateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// LiDAR sweeps (`.pcf`), frustum crop and clustering.
    Outdoor,
    /// Depth maps (`.dep`), foreground back-projection.
    Indoor,
}

#[derive(Args, Debug)]
pub struct MakeFixtureArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Kind::Outdoor)]
    pub kind: Kind,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Training-split objects per class.
    #[arg(long, default_value_t = 20)]
    pub objects_per_class: usize,
    /// Training-split scene count.
    #[arg(long, default_value_t = 5)]
    pub scenes: usize,
    #[arg(long, default_value_t = 10)]
    pub test_objects_per_class: usize,
    #[arg(long, default_value_t = 3)]
    pub test_scenes: usize,
    #[arg(long, default_value_t = 16)]
    pub embed_dim: usize,
    /// Weight of the per-crop direction mixed into image embeddings.
    #[arg(long, default_value_t = 0.5)]
    pub image_spread: f64,
    /// Low-score distractor boxes per scene.
    #[arg(long, default_value_t = 2)]
    pub distractors: usize,
    #[arg(long, default_value = DEFAULT_TEMPLATE)]
    pub template: String,
}

#[derive(Args, Debug)]
pub struct CollectArgs {
    /// Directory of `<scene>.calib` plus `<scene>.pcf` or `<scene>.dep`.
    #[arg(long)]
    pub scenes: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Outdoor)]
    pub kind: Kind,
    /// Triplet file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-scene record counts and skip reasons.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Detections scoring below this are dropped.
    #[arg(long, default_value_t = DEFAULT_SCORE_THRESHOLD)]
    pub score_threshold: f64,
    /// Frustum near plane, meters.
    #[arg(long, default_value_t = 0.5)]
    pub near: f64,
    /// Frustum far plane, meters.
    #[arg(long, default_value_t = 80.0)]
    pub far: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 5)]
    pub min_pts: usize,
    /// Smallest cluster accepted as an outdoor proxy.
    #[arg(long, default_value_t = 20)]
    pub min_cluster_size: usize,
    /// Half width of the indoor foreground depth band, meters.
    #[arg(long, default_value_t = 0.5)]
    pub depth_band: f64,
    /// Smallest indoor foreground accepted as a proxy.
    #[arg(long, default_value_t = 32)]
    pub min_points: usize,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[arg(long)]
    pub triplets: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Encoder checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// `key = value` training settings; flags override them.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Per-step losses, epoch means and the checkpoint digest.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Full optimizer state to write, for `--resume`.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Continue from a state written by `--state`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop once this many total steps are done.
    #[arg(long)]
    pub stop_after: Option<usize>,
    #[arg(long, default_value = DEFAULT_TEMPLATE)]
    pub template: String,
    /// [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Contrastive temperature [default: 0.07]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Weight of the text-point term [default: 0.5]
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Weight of the image-point term [default: 0.5]
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// Peak learning rate [default: 0.006]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// [default: 0.03]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Linear warmup steps [default: 1000]
    #[arg(long)]
    pub warmup: Option<usize>,
    /// [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Total steps, overriding `--epochs`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Repeat-factor sampling threshold [default: 0.01]
    #[arg(long)]
    pub repeat_threshold: Option<f64>,
    /// Threads; the result does not depend on it [default: 1]
    #[arg(long)]
    pub workers: Option<usize>,
    /// [default: 64]
    #[arg(long)]
    pub hidden1: Option<usize>,
    /// [default: 128]
    #[arg(long)]
    pub hidden2: Option<usize>,
    /// [default: 128]
    #[arg(long)]
    pub hidden3: Option<usize>,
    /// Must match the embedding file [default: 64]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Points sampled per proxy [default: 2048]
    #[arg(long)]
    pub num_points: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsembleSpace {
    /// Sum probability vectors.
    Probabilities,
    /// Sum raw scores, then softmax; the point scores are the inner products.
    Logits,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Class names, one per line.
    #[arg(long)]
    pub classes: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub triplets: PathBuf,
    /// Predictions file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = DEFAULT_TEMPLATE)]
    pub template: String,
    /// Point sampling seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Extra per-instance class scores to add to the point predictions.
    #[arg(long)]
    pub ensemble: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = EnsembleSpace::Probabilities)]
    pub ensemble_space: EnsembleSpace,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Class names, one per line, in prediction index order.
    #[arg(long)]
    pub classes: PathBuf,
    /// Report to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Center distance below which a proxy matches a ground truth, meters.
    #[arg(long, default_value_t = DEFAULT_DISTANCE_THRESHOLD)]
    pub threshold: f64,
    /// Skip center-distance precision and recall.
    #[arg(long)]
    pub no_localization: bool,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Io => 3,
        ErrorKind::Format => 4,
        ErrorKind::Numerical => 5,
        ErrorKind::Data => 6,
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    use std::io::Write;
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, 2) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .format(|buf, record| writeln!(buf, "{}: {}", record.level().as_str().to_lowercase(), record.args()))
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    let result = match &cli.command {
        Command::MakeFixture(a) => commands::make_fixture(a),
        Command::Collect(a) => commands::collect(a),
        Command::Pretrain(a) => commands::pretrain(a),
        Command::Classify(a) => commands::classify(a),
        Command::Evaluate(a) => commands::evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
