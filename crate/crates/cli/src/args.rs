use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use puffnet_core::{OutEmbedMode, PositionalEncoding};

#[derive(Debug, Parser)]
#[command(name = "puffnet", version, about = "Puff-Net style transfer at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoints plus a loss table.
    Train(TrainArgs),
    /// Stylize one content image with one style image.
    Stylize(StylizeArgs),
    /// Content and style losses over a manifest of image pairs.
    Eval(EvalArgs),
    /// Attention MAC accounting and stylize timings.
    Bench(BenchArgs),
    /// Short identical trainings under each output-embedding initialisation.
    AblateInit(AblateInitArgs),
    /// Short identical trainings with CAPE and with sinusoidal encoding.
    AblatePe(AblatePeArgs),
    /// Feed the output back as content repeatedly.
    Rounds(RoundsArgs),
}

/// Seed shared by every command; `PUFFNET_SEED` takes precedence.
#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Embedding width C.
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value = "cape")]
    pub pe: PositionalEncoding,
    #[arg(long, default_value = "content")]
    pub out_embed: OutEmbedMode,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory of content PNGs; synthetic images when omitted.
    #[arg(long, requires = "style_dir")]
    pub content_dir: Option<PathBuf>,
    /// Directory of style PNGs.
    #[arg(long, requires = "content_dir")]
    pub style_dir: Option<PathBuf>,
    /// Square training crop, a multiple of 8 and at least 32.
    #[arg(long, default_value_t = 64)]
    pub crop: usize,
    #[arg(long, default_value_t = 0.0005)]
    pub lr: f64,
    /// Warmup length; 4% of the iterations when omitted.
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long, default_value_t = 0.12)]
    pub freeze_fraction: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value_t = 500)]
    pub iters: u64,
    /// Save a checkpoint every this many steps (0: only at the end).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    /// Continue from a checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Output directory for checkpoints and `losses.tsv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct StylizeArgs {
    #[arg(long)]
    pub content: PathBuf,
    #[arg(long)]
    pub style: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// One `content<TAB>style` pair per line; relative paths resolve
    /// against the manifest's directory.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Perceptual network weight file; a seeded network when omitted.
    #[arg(long)]
    pub psi: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Sequence lengths.
    #[arg(long = "L", value_delimiter = ',', default_value = "16,64,256")]
    pub lengths: Vec<usize>,
    /// Embedding widths.
    #[arg(long = "C", value_delimiter = ',', default_value = "32,192")]
    pub widths: Vec<usize>,
    /// Square resolutions for the stylize timings.
    #[arg(long, value_delimiter = ',', default_value = "64,128")]
    pub res: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    /// Output directory for `macs.tsv` and `timing.tsv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}

/// Training knobs shared by both ablations.
#[derive(Debug, Clone, Args)]
pub struct AblationArgs {
    #[arg(long, default_value_t = 60)]
    pub iters: u64,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Output directory for per-run curves, images and the summary.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AblateInitArgs {
    #[arg(long, value_delimiter = ',', default_value = "content,style,zero,random")]
    pub modes: Vec<OutEmbedMode>,
    #[command(flatten)]
    pub run: AblationArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AblatePeArgs {
    #[arg(long, value_delimiter = ',', default_value = "cape,sinusoidal")]
    pub pe: Vec<PositionalEncoding>,
    #[command(flatten)]
    pub run: AblationArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RoundsArgs {
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long)]
    pub content: PathBuf,
    #[arg(long)]
    pub style: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Output directory for `round_XX.png` and `rounds.tsv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
}
