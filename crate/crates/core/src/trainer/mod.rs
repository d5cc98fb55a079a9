//! Optimization loop: Adam with linear warmup, the style-extractor freeze,
//! seeded data sampling and resumable checkpoints.
//!
//! Steps are numbered from 1. Step `t` trains with `lr_at(t)`, so the
//! learning rate is already nonzero on the first update.

pub mod adam;
pub mod checkpoint;
pub mod data;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, RunConfig};
pub use data::{random_crop, Dataset};

use crate::error::{invalid, Result};
use crate::losses::{
    combine_extractor_terms, content_loss_feats, precise, style_loss_feats, total_loss,
    ExtractorTerms, LossParts, LossWeights, PerceptualNet,
};
use crate::model::{ModelConfig, PuffNetModel, CAPE_PREFIX, STYLE_EXTRACTOR_PREFIX};
use crate::rng::Rng;
use crate::stylizer::PositionalEncoding;
use crate::tensor::{no_grad, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_iters: u64,
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub freeze_fraction: f64,
    pub crop: usize,
    pub batch: usize,
    pub seed: u64,
    pub content_dir: Option<PathBuf>,
    pub style_dir: Option<PathBuf>,
    /// Save every this many steps; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::with_iters(500)
    }
}

impl TrainConfig {
    /// Defaults with warmup at 4% of `total_iters`.
    pub fn with_iters(total_iters: u64) -> Self {
        Self {
            total_iters,
            base_lr: 0.0005,
            warmup_steps: total_iters * 4 / 100,
            freeze_fraction: 0.12,
            crop: 64,
            batch: 1,
            seed: 0,
            content_dir: None,
            style_dir: None,
            checkpoint_every: 0,
            weights: LossWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(invalid("train config", msg));
        if self.total_iters == 0 {
            return fail("total_iters must be positive".into());
        }
        if !(self.freeze_fraction > 0.0 && self.freeze_fraction < 1.0) {
            return fail(format!("freeze_fraction {} outside (0, 1)", self.freeze_fraction));
        }
        if self.warmup_steps >= self.total_iters {
            return fail(format!("warmup_steps {} ≥ total_iters {}", self.warmup_steps, self.total_iters));
        }
        if !self.crop.is_multiple_of(crate::PATCH) || self.crop < crate::losses::MIN_FEATURE_SIZE {
            return fail(format!("crop {} must be a multiple of 8 and at least 32", self.crop));
        }
        if self.batch != 1 {
            return fail(format!("batch {} unsupported (only 1)", self.batch));
        }
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return fail(format!("base_lr {} must be finite and nonnegative", self.base_lr));
        }
        self.weights.validate()
    }

    /// First step at which the style extractor is frozen.
    pub fn freeze_step(&self) -> u64 {
        // Guard against 0.12 · 100 evaluating to 12.000000000000002.
        (self.freeze_fraction * self.total_iters as f64 - 1e-9).ceil().max(0.0) as u64
    }
}

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then constant.
pub fn lr_at(t: u64, cfg: &TrainConfig) -> f64 {
    if t < cfg.warmup_steps {
        cfg.base_lr * t as f64 / cfg.warmup_steps as f64
    } else {
        cfg.base_lr
    }
}

/// Scalar outcome of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossReport {
    pub step: u64,
    pub lr: f64,
    pub content: f32,
    pub style: f32,
    pub extractor: f32,
    pub id1: f32,
    pub id2: f32,
    pub total: f32,
}

impl LossReport {
    pub fn components(&self) -> [f32; 5] {
        [self.content, self.style, self.extractor, self.id1, self.id2]
    }

    pub const TSV_HEADER: &'static str = "step\tlr\tcontent\tstyle\textractor\tid1\tid2\ttotal";

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}",
            self.step, self.lr, self.content, self.style, self.extractor, self.id1, self.id2, self.total
        )
    }
}

/// Owns the model, optimizer state and frozen loss network of a run.
pub struct Trainer {
    pub model: PuffNetModel,
    pub adam: AdamState,
    pub perceptual: PerceptualNet,
    pub config: TrainConfig,
    /// Number of completed steps.
    pub step: u64,
    root: Rng,
}

impl Trainer {
    pub fn new(model_config: ModelConfig, config: TrainConfig, perceptual: PerceptualNet) -> Result<Self> {
        config.validate()?;
        let root = Rng::new(config.seed);
        Ok(Self {
            model: PuffNetModel::new(model_config, config.seed)?,
            adam: AdamState::default(),
            perceptual,
            config,
            step: 0,
            root,
        })
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            model: self.model.config,
            train: self.config.clone(),
        }
    }

    pub fn data_rng(&self) -> Rng {
        self.root.split("data")
    }

    /// One optimization step on an already cropped pair.
    pub fn train_step(&mut self, content: &Tensor, style: &Tensor) -> Result<LossReport> {
        let t = self.step + 1;
        if t >= self.config.freeze_step() {
            self.model.freeze(STYLE_EXTRACTOR_PREFIX);
        }
        if self.model.config.stylizer.positional == PositionalEncoding::Sinusoidal {
            // CAPE is not on the forward path; keep it out of the update.
            self.model.freeze(CAPE_PREFIX);
        }
        let parts = self.losses(content, style, t)?;
        let w = self.config.weights;
        let total = total_loss(&parts, &w)?;
        total.backward()?;
        let lr = lr_at(t, &self.config);
        adam_step(&mut self.model, &mut self.adam, lr)?;
        self.step = t;
        Ok(LossReport {
            step: t,
            lr,
            content: parts.content.item(),
            style: parts.style.item(),
            extractor: parts.extractor.item(),
            id1: parts.id1.item(),
            id2: parts.id2.item(),
            total: total.item(),
        })
    }

    /// The five loss components for a pair, with the graph attached.
    pub fn losses(&self, content: &Tensor, style: &Tensor, t: u64) -> Result<LossParts> {
        let mut rng = self.root.split(&format!("embed{t}"));
        loss_parts(&self.model, &self.perceptual, &self.config.weights, content, style, &mut rng)
    }

    /// Runs steps `step+1 ..= until`, drawing pairs from `data`. `on_step`
    /// sees every report; checkpoints go to `ckpt_dir` when enabled.
    pub fn train(
        &mut self,
        data: &Dataset,
        until: u64,
        ckpt_dir: Option<&Path>,
        mut on_step: impl FnMut(&LossReport),
    ) -> Result<Vec<LossReport>> {
        let seed = self.data_rng();
        let mut out = Vec::new();
        while self.step < until {
            let (c, s) = data.batch(self.step + 1, self.config.crop, &seed)?;
            let report = self.train_step(&c, &s)?;
            on_step(&report);
            out.push(report);
            let every = self.config.checkpoint_every;
            if let Some(dir) = ckpt_dir {
                if (every > 0 && self.step.is_multiple_of(every)) || self.step == until {
                    self.save(&dir.join(format!("step{:06}.puff", self.step)))?;
                }
            }
        }
        Ok(out)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.model, &self.adam, self.step, &self.run_config())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    /// Rebuilds a trainer exactly as it was when `path` was written.
    pub fn resume(path: &Path, perceptual: PerceptualNet) -> Result<Self> {
        let ckpt = Checkpoint::load(path)?;
        let mut trainer = Self::new(ckpt.config.model, ckpt.config.train.clone(), perceptual)?;
        ckpt.restore_model(&mut trainer.model)?;
        trainer.adam = ckpt.adam;
        trainer.step = ckpt.iter;
        Ok(trainer)
    }
}

/// Every image produced for one training pair.
pub struct StepImages {
    pub pure_cc: Tensor,
    pub pure_cs: Tensor,
    pub pure_sc: Tensor,
    pub pure_ss: Tensor,
    pub i_o: Tensor,
    pub i_cc: Tensor,
    pub i_ss: Tensor,
}

/// The four extractor passes and three stylizations of one pair.
pub fn step_images(m: &PuffNetModel, content: &Tensor, style: &Tensor, rng: &mut Rng) -> Result<StepImages> {
    let pure_cc = m.content_extractor.forward(content)?;
    let pure_cs = m.style_extractor.forward(content)?;
    let pure_sc = m.content_extractor.forward(style)?;
    let pure_ss = m.style_extractor.forward(style)?;
    let i_o = m.stylizer.forward_traced(&pure_cc, &pure_ss, Some(&mut *rng))?.output;
    let i_cc = m.stylizer.forward_traced(&pure_cc, &pure_cs, Some(&mut *rng))?.output;
    let i_ss = m.stylizer.forward_traced(&pure_sc, &pure_ss, Some(&mut *rng))?.output;
    Ok(StepImages { pure_cc, pure_cs, pure_sc, pure_ss, i_o, i_cc, i_ss })
}

/// The five loss components of one pair, with the graph attached.
pub fn loss_parts(
    m: &PuffNetModel,
    net: &PerceptualNet,
    weights: &LossWeights,
    content: &Tensor,
    style: &Tensor,
    rng: &mut Rng,
) -> Result<LossParts> {
    let x = step_images(m, content, style, rng)?;
    let feats_c = no_grad(|| net.features(content))?;
    let feats_s = no_grad(|| net.features(style))?;
    let feats_o = net.features(&x.i_o)?;
    let feats_cc = net.features(&x.i_cc)?;
    let feats_ss = net.features(&x.i_ss)?;

    let terms = ExtractorTerms {
        cc: content_loss_feats(&net.features(&x.pure_cc)?, &feats_c)?,
        cs: style_loss_feats(&net.features(&x.pure_cs)?, &feats_c)?,
        sc: content_loss_feats(&net.features(&x.pure_sc)?, &feats_s)?,
        ss: style_loss_feats(&net.features(&x.pure_ss)?, &feats_s)?,
    };
    Ok(LossParts {
        content: content_loss_feats(&feats_o, &feats_c)?,
        style: style_loss_feats(&feats_o, &feats_s)?,
        extractor: combine_extractor_terms(&terms, weights)?,
        id1: x.i_cc.mse(content)?.add(&x.i_ss.mse(style)?)?,
        id2: content_loss_feats(&feats_cc, &feats_c)?.add(&content_loss_feats(&feats_ss, &feats_s)?)?,
    })
}

/// Same five components as [`loss_parts`], reduced in `f64` without a graph.
pub fn loss_values(
    m: &PuffNetModel,
    net: &PerceptualNet,
    w: &LossWeights,
    content: &Tensor,
    style: &Tensor,
    rng: &mut Rng,
) -> Result<[f64; 5]> {
    no_grad(|| {
        let x = step_images(m, content, style, rng)?;
        let f = |t: &Tensor| net.features(t);
        let (fc, fs) = (f(content)?, f(style)?);
        let fo = f(&x.i_o)?;
        let (l1, l2) = (f64::from(w.lambda_1), f64::from(w.lambda_2));
        let fe = l1 * precise::content(&f(&x.pure_cc)?, &fc)
            + l2 * precise::style(&f(&x.pure_cs)?, &fc)
            + l1 * precise::content(&f(&x.pure_sc)?, &fs)
            + l2 * precise::style(&f(&x.pure_ss)?, &fs);
        Ok([
            precise::content(&fo, &fc),
            precise::style(&fo, &fs),
            fe,
            precise::mse(x.i_cc.data(), content.data()) + precise::mse(x.i_ss.data(), style.data()),
            precise::content(&f(&x.i_cc)?, &fc) + precise::content(&f(&x.i_ss)?, &fs),
        ])
    })
}

/// `Σ λ·component` in `f64`.
pub fn weighted_total(values: &[f64; 5], w: &LossWeights) -> f64 {
    let lambdas = [w.lambda_c, w.lambda_s, w.lambda_fe, w.lambda_id1, w.lambda_id2];
    values.iter().zip(lambdas).map(|(v, l)| v * f64::from(l)).sum()
}

/// Loads a model for inference from a checkpoint file.
pub fn load_model(path: &Path) -> Result<PuffNetModel> {
    let ckpt = Checkpoint::load(path)?;
    let mut model = PuffNetModel::new(ckpt.config.model, ckpt.config.train.seed)?;
    ckpt.restore_model(&mut model)?;
    Ok(model)
}
