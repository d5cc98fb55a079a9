//! Perceptual feature pyramid and the weighted loss system.
//!
//! Every `‖·‖₂` term is a mean-squared error, so magnitudes do not depend on
//! resolution. Style statistics are per-channel mean and biased variance
//! over spatial positions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, PuffError, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::trainer::checkpoint::{read_records, Record};

/// Output channels of the five pyramid stages.
pub const STAGE_CHANNELS: [usize; 5] = [16, 32, 64, 128, 128];
pub const MIN_FEATURE_SIZE: usize = 32;

/// Frozen five-stage conv pyramid (3×3 conv + relu per stage, 2×2 average
/// pool between stages).
#[derive(Debug, Clone)]
pub struct PerceptualNet {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl PerceptualNet {
    /// He-uniform weights from `seed`; the default network uses seed 0.
    pub fn seeded(seed: u64) -> Self {
        let root = Rng::new(seed);
        let mut c_in = 3;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (i, &c_out) in STAGE_CHANNELS.iter().enumerate() {
            let mut rng = root.split(&format!("stage{i}"));
            let fan_in = c_in * 9;
            let bound = (6.0 / fan_in as f32).sqrt();
            let n = c_out * fan_in;
            weights.push(
                Tensor::new(vec![c_out, c_in, 3, 3], rng.uniform_vec(n, -bound, bound))
                    .expect("stage weight shape"),
            );
            biases.push(Tensor::zeros(vec![c_out]));
            c_in = c_out;
        }
        Self { weights, biases }
    }

    /// Loads `stage{i}.weight` / `stage{i}.bias` records from a checkpoint
    /// container file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let records = read_records(path)?;
        let find = |name: &str| -> Result<&Record> {
            records
                .iter()
                .find(|r| r.name == name)
                .ok_or_else(|| PuffError::MissingTensor(name.to_string()))
        };
        let mut c_in = 3;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (i, &c_out) in STAGE_CHANNELS.iter().enumerate() {
            let w = find(&format!("stage{i}.weight"))?;
            let b = find(&format!("stage{i}.bias"))?;
            if w.dims != [c_out, c_in, 3, 3] || b.dims != [c_out] {
                return Err(PuffError::Format(format!("stage {i} has unexpected shape")));
            }
            weights.push(Tensor::new(w.dims.clone(), w.data.clone())?);
            biases.push(Tensor::new(b.dims.clone(), b.data.clone())?);
            c_in = c_out;
        }
        for r in &records {
            let known = (0..STAGE_CHANNELS.len())
                .any(|i| r.name == format!("stage{i}.weight") || r.name == format!("stage{i}.bias"));
            if !known {
                return Err(PuffError::UnknownTensor(r.name.clone()));
            }
        }
        Ok(Self { weights, biases })
    }

    pub fn records(&self) -> Vec<Record> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            out.push(Record::from_tensor(format!("stage{i}.weight"), w));
            out.push(Record::from_tensor(format!("stage{i}.bias"), b));
        }
        out
    }

    /// The five stage activations; gradients flow into `img` only.
    pub fn features(&self, img: &Tensor) -> Result<Vec<Tensor>> {
        match img.shape() {
            [_, 3, h, w] if *h >= MIN_FEATURE_SIZE && *w >= MIN_FEATURE_SIZE => {}
            [_, 3, h, w] => {
                return Err(invalid(
                    "features",
                    format!("{h}×{w} is too small for five stages (need ≥ {MIN_FEATURE_SIZE})"),
                ))
            }
            s => return Err(invalid("features", format!("expected B×3×H×W, got {s:?}"))),
        }
        let mut out = Vec::with_capacity(self.weights.len());
        let mut x = img.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if i > 0 {
                x = x.avg_pool2x()?;
            }
            x = x.conv2d(w, Some(b), 1)?.relu();
            out.push(x.clone());
        }
        Ok(out)
    }
}

/// Per-channel spatial mean and biased variance of a `1×C×H×W` map.
pub fn channel_stats(feat: &Tensor) -> Result<(Tensor, Tensor)> {
    let (c, hw) = match feat.shape() {
        [1, c, h, w] => (*c, h * w),
        s => return Err(invalid("channel_stats", format!("expected 1×C×H×W, got {s:?}"))),
    };
    let flat = feat.reshape(vec![c, hw])?;
    Ok((flat.row_mean()?, flat.row_var()?))
}

fn layer_mean(terms: Vec<Tensor>) -> Result<Tensor> {
    let n = terms.len() as f32;
    let mut iter = terms.into_iter();
    let first = iter.next().ok_or_else(|| invalid("loss", "no feature layers"))?;
    iter.try_fold(first, |acc, t| acc.add(&t))
        .map(|s| s.scale(1.0 / n))
}

/// Layer-averaged feature MSE on precomputed pyramids.
pub fn content_loss_feats(a: &[Tensor], b: &[Tensor]) -> Result<Tensor> {
    if a.len() != b.len() {
        return Err(invalid("content_loss", "pyramids differ in depth"));
    }
    layer_mean(a.iter().zip(b).map(|(x, y)| x.mse(y)).collect::<Result<_>>()?)
}

/// Layer-averaged MSE of channel means plus MSE of channel variances.
pub fn style_loss_feats(a: &[Tensor], b: &[Tensor]) -> Result<Tensor> {
    if a.len() != b.len() {
        return Err(invalid("style_loss", "pyramids differ in depth"));
    }
    let terms = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            if x.shape()[1] != y.shape()[1] {
                return Err(shape_err("style_loss", x.shape(), y.shape()));
            }
            let (mx, vx) = channel_stats(x)?;
            let (my, vy) = channel_stats(y)?;
            mx.mse(&my)?.add(&vx.mse(&vy)?)
        })
        .collect::<Result<_>>()?;
    layer_mean(terms)
}

pub fn content_loss(output: &Tensor, content: &Tensor, net: &PerceptualNet) -> Result<Tensor> {
    if output.shape() != content.shape() {
        return Err(shape_err("content_loss", output.shape(), content.shape()));
    }
    content_loss_feats(&net.features(output)?, &net.features(content)?)
}

pub fn style_loss(output: &Tensor, style: &Tensor, net: &PerceptualNet) -> Result<Tensor> {
    style_loss_feats(&net.features(output)?, &net.features(style)?)
}

/// The seven scalar weights of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_c: f32,
    pub lambda_s: f32,
    pub lambda_fe: f32,
    pub lambda_id1: f32,
    pub lambda_id2: f32,
    /// Weight of the two content-extractor terms inside `L_fe`.
    pub lambda_1: f32,
    /// Weight of the two style-extractor terms inside `L_fe`.
    pub lambda_2: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_c: 7.0,
            lambda_s: 10.0,
            lambda_fe: 20.0,
            lambda_id1: 70.0,
            lambda_id2: 1.0,
            lambda_1: 0.7,
            lambda_2: 1.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            lambda_c: 0.0,
            lambda_s: 0.0,
            lambda_fe: 0.0,
            lambda_id1: 0.0,
            lambda_id2: 0.0,
            lambda_1: 0.0,
            lambda_2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_c,
            self.lambda_s,
            self.lambda_fe,
            self.lambda_id1,
            self.lambda_id2,
            self.lambda_1,
            self.lambda_2,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(invalid("loss weights", "all weights must be finite and nonnegative"))
        }
    }
}

/// The four extractor terms of `L_fe`, already reduced.
pub struct ExtractorTerms {
    /// content_loss(pure_cc, I_c)
    pub cc: Tensor,
    /// style_loss(pure_cs, I_c)
    pub cs: Tensor,
    /// content_loss(pure_sc, I_s)
    pub sc: Tensor,
    /// style_loss(pure_ss, I_s)
    pub ss: Tensor,
}

pub fn combine_extractor_terms(t: &ExtractorTerms, w: &LossWeights) -> Result<Tensor> {
    t.cc.scale(w.lambda_1)
        .add(&t.cs.scale(w.lambda_2))?
        .add(&t.sc.scale(w.lambda_1))?
        .add(&t.ss.scale(w.lambda_2))
}

#[allow(clippy::too_many_arguments)]
pub fn extractor_loss(
    content: &Tensor,
    style: &Tensor,
    pure_cc: &Tensor,
    pure_cs: &Tensor,
    pure_sc: &Tensor,
    pure_ss: &Tensor,
    net: &PerceptualNet,
    w: &LossWeights,
) -> Result<Tensor> {
    let terms = ExtractorTerms {
        cc: content_loss(pure_cc, content, net)?,
        cs: style_loss(pure_cs, content, net)?,
        sc: content_loss(pure_sc, style, net)?,
        ss: style_loss(pure_ss, style, net)?,
    };
    combine_extractor_terms(&terms, w)
}

/// `(L_id1, L_id2)`: pixel-space and feature-space reconstruction errors.
pub fn identity_losses(
    i_cc: &Tensor,
    content: &Tensor,
    i_ss: &Tensor,
    style: &Tensor,
    net: &PerceptualNet,
) -> Result<(Tensor, Tensor)> {
    let id1 = i_cc.mse(content)?.add(&i_ss.mse(style)?)?;
    let id2 = content_loss(i_cc, content, net)?.add(&content_loss(i_ss, style, net)?)?;
    Ok((id1, id2))
}

/// The five reduced components of the objective.
#[derive(Debug, Clone)]
pub struct LossParts {
    pub content: Tensor,
    pub style: Tensor,
    pub extractor: Tensor,
    pub id1: Tensor,
    pub id2: Tensor,
}

impl LossParts {
    pub fn from_values(vals: [f32; 5]) -> Self {
        let [c, s, fe, id1, id2] = vals.map(Tensor::scalar);
        Self {
            content: c,
            style: s,
            extractor: fe,
            id1,
            id2,
        }
    }

    fn named(&self) -> [(&'static str, &Tensor); 5] {
        [
            ("content", &self.content),
            ("style", &self.style),
            ("extractor", &self.extractor),
            ("id1", &self.id1),
            ("id2", &self.id2),
        ]
    }
}

/// `λ_c L_c + λ_s L_s + λ_fe L_fe + λ_id1 L_id1 + λ_id2 L_id2`.
pub fn total_loss(parts: &LossParts, w: &LossWeights) -> Result<Tensor> {
    for (name, t) in parts.named() {
        if t.numel() != 1 {
            return Err(invalid("total_loss", format!("{name} term is not a scalar")));
        }
        if !t.item().is_finite() {
            return Err(PuffError::NonFinite(format!("{name} loss term")));
        }
    }
    let total = parts
        .content
        .scale(w.lambda_c)
        .add(&parts.style.scale(w.lambda_s))?
        .add(&parts.extractor.scale(w.lambda_fe))?
        .add(&parts.id1.scale(w.lambda_id1))?
        .add(&parts.id2.scale(w.lambda_id2))?;
    total.ensure_finite("total loss")?;
    Ok(total)
}

/// Loop-based re-implementation of the reductions in `f64`, independent of
/// the autograd ops. Used as a test oracle and for low-noise loss values.
pub mod precise {
    use crate::tensor::Tensor;

    pub fn mse(a: &[f32], b: &[f32]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
            .sum::<f64>()
            / a.len() as f64
    }

    /// Per-channel mean and biased variance of a `1×C×H×W` map.
    pub fn stats(t: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let c = t.shape()[1];
        let hw = t.numel() / c;
        let mut means = Vec::new();
        let mut vars = Vec::new();
        for ch in t.data().chunks(hw) {
            let m = ch.iter().map(|&v| f64::from(v)).sum::<f64>() / hw as f64;
            let v = ch.iter().map(|&x| (f64::from(x) - m).powi(2)).sum::<f64>() / hw as f64;
            means.push(m);
            vars.push(v);
        }
        (means, vars)
    }

    fn mse64(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
    }

    pub fn content(a: &[Tensor], b: &[Tensor]) -> f64 {
        a.iter().zip(b).map(|(x, y)| mse(x.data(), y.data())).sum::<f64>() / a.len() as f64
    }

    pub fn style(a: &[Tensor], b: &[Tensor]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let (mx, vx) = stats(x);
                let (my, vy) = stats(y);
                mse64(&mx, &my) + mse64(&vx, &vy)
            })
            .sum::<f64>()
            / a.len() as f64
    }
}
