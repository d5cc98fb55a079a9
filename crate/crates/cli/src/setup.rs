use std::path::Path;

use puffnet_core::imageio::{fit_to_patches, load_png};
use puffnet_core::stylizer::StylizerConfig;
use puffnet_core::trainer::Dataset;
use puffnet_core::{no_grad, ModelConfig, PerceptualNet, PuffNetModel, Rng, Tensor, TrainConfig};

use crate::args::{DataArgs, ModelArgs, SeedArg};
use crate::{kv, CliError, CliResult};

pub const SEED_ENV: &str = "PUFFNET_SEED";

/// Seed of the perceptual network when no weight file is given. Fixed
/// apart from the run seed so losses stay comparable across runs.
pub const PSI_SEED: u64 = 0;

/// Synthetic training pool used when no data directories are given.
pub const SYNTHETIC_POOL: usize = 4;
pub const SYNTHETIC_SIZE: usize = 96;

/// `PUFFNET_SEED` if set, else `--seed`.
pub fn resolve_seed(arg: &SeedArg) -> CliResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(arg.seed),
    }
}

pub fn model_config(a: &ModelArgs) -> CliResult<ModelConfig> {
    model_config_from(a.width, a.heads, a.layers, a.pe, a.out_embed)
}

pub(crate) fn model_config_from(
    width: usize,
    heads: usize,
    layers: usize,
    pe: puffnet_core::PositionalEncoding,
    out_embed: puffnet_core::OutEmbedMode,
) -> CliResult<ModelConfig> {
    if width == 0 || heads == 0 || !width.is_multiple_of(heads) {
        return Err(CliError::Usage(format!("width {width} must be a positive multiple of heads {heads}")));
    }
    if layers == 0 {
        return Err(CliError::Usage("layers must be at least 1".into()));
    }
    Ok(ModelConfig {
        stylizer: StylizerConfig {
            width,
            heads,
            layers,
            positional: pe,
            out_embed,
            ..StylizerConfig::default()
        },
        ..ModelConfig::default()
    })
}

pub fn train_config(data: &DataArgs, iters: u64, seed: u64, checkpoint_every: u64) -> CliResult<TrainConfig> {
    let mut cfg = TrainConfig::with_iters(iters);
    cfg.base_lr = data.lr;
    if let Some(w) = data.warmup {
        cfg.warmup_steps = w;
    }
    cfg.freeze_fraction = data.freeze_fraction;
    cfg.crop = data.crop;
    cfg.seed = seed;
    cfg.content_dir = data.content_dir.clone();
    cfg.style_dir = data.style_dir.clone();
    cfg.checkpoint_every = checkpoint_every;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn dataset(cfg: &TrainConfig) -> CliResult<Dataset> {
    Ok(match (&cfg.content_dir, &cfg.style_dir) {
        (Some(c), Some(s)) => Dataset::from_dirs(c, s)?,
        _ => Dataset::synthetic(SYNTHETIC_POOL, SYNTHETIC_SIZE)?,
    })
}

pub fn perceptual(path: Option<&Path>) -> CliResult<(PerceptualNet, String)> {
    Ok(match path {
        Some(p) => (PerceptualNet::from_file(p)?, p.display().to_string()),
        None => (PerceptualNet::seeded(PSI_SEED), format!("seeded:{PSI_SEED}")),
    })
}

/// Content fitted to multiples of 8; style resized to the content's size.
pub fn prepare_pair(content: &Path, style: &Path) -> CliResult<(Tensor, Tensor)> {
    let c = fit_to_patches(&load_png(content)?)?;
    let s = load_png(style)?;
    let s = match (c.shape(), s.shape()) {
        ([.., h, w], [.., sh, sw]) if (h, w) != (sh, sw) => no_grad(|| s.resize_bilinear(*h, *w))?,
        _ => s,
    };
    Ok((c, s))
}

/// Inference pass; the `random` output embedding draws from the run seed.
pub fn stylize(model: &PuffNetModel, content: &Tensor, style: &Tensor, seed: u64) -> CliResult<Tensor> {
    let mut rng = Rng::new(seed).split("stylize");
    Ok(no_grad(|| model.stylize(content, style, Some(&mut rng)))?)
}

pub fn config_header(command: &str, seed: u64, extra: serde_json::Value) -> Vec<(String, String)> {
    vec![
        kv("command", command),
        kv("seed", seed),
        kv("config", serde_json::to_string(&extra).expect("config is plain data")),
    ]
}
