//! Content and style extractors. Both map a `1×3×H×W` image in `[0, 1]` to
//! an image of the same shape.
//!
//! The content extractor lifts the image to 16 channels, runs a stack of
//! affine-coupling blocks over that space and projects back to RGB. The
//! coupling stack is exactly invertible; the lift and drop convolutions are
//! not part of that guarantee.
//!
//! The style extractor tokenises the image into 8×8 patches and runs
//! lite-transformer blocks (self-attention plus a flattened feed-forward
//! whose hidden width equals the token width) before projecting tokens
//! back to pixels.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::impl_parameters;
use crate::layers::{Conv2d, FeedForward, LayerNorm, Linear, MultiHeadAttention};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::PATCH;

/// Bound on the coupling log-scale before `exp`.
pub const LOG_SCALE_CLAMP: f32 = 5.0;

/// Channels the INN stack works in.
pub const INN_CHANNELS: usize = 16;

/// Bottleneck mapping: 1×1 expand (×2) → relu → 3×3 → relu → 1×1 project.
#[derive(Debug, Clone)]
pub struct Brb {
    pub expand: Conv2d,
    pub conv: Conv2d,
    pub project: Conv2d,
}
impl_parameters!(Brb { expand, conv, project });

impl Brb {
    pub fn new(rng: &mut Rng, channels: usize) -> Self {
        let hidden = 2 * channels;
        let mut project = Conv2d::new(&mut rng.split("project"), hidden, channels, 1);
        // Start close to a neutral coupling.
        project.weight = project.weight.scale(0.1).to_param();
        Self {
            expand: Conv2d::new_relu(&mut rng.split("expand"), channels, hidden, 1),
            conv: Conv2d::new_relu(&mut rng.split("conv"), hidden, hidden, 3),
            project,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.expand.forward(x)?.relu();
        let h = self.conv.forward(&h)?.relu();
        self.project.forward(&h)
    }
}

/// One affine-coupling layer over `2c` channels.
#[derive(Debug, Clone)]
pub struct InnBlock {
    /// Split index: channels `[0, c)` and `[c, 2c)`.
    pub c: usize,
    pub phi1: Brb,
    pub phi2: Brb,
    pub phi3: Brb,
}
impl_parameters!(InnBlock { phi1, phi2, phi3 });

impl InnBlock {
    pub fn new(rng: &mut Rng, c: usize) -> Self {
        Self {
            c,
            phi1: Brb::new(&mut rng.split("phi1"), c),
            phi2: Brb::new(&mut rng.split("phi2"), c),
            phi3: Brb::new(&mut rng.split("phi3"), c),
        }
    }

    fn check(&self, y: &Tensor, op: &'static str) -> Result<()> {
        match y.shape() {
            [_, ch, _, _] if *ch == 2 * self.c => Ok(()),
            s => Err(invalid(op, format!("expected {} channels, got {s:?}", 2 * self.c))),
        }
    }

    fn log_scale(&self, second: &Tensor) -> Result<Tensor> {
        Ok(self.phi2.forward(second)?.clamp(-LOG_SCALE_CLAMP, LOG_SCALE_CLAMP))
    }

    /// second ← second + φ₁(first); first ← first ⊙ exp(φ₂(second)) + φ₃(second).
    pub fn forward(&self, y: &Tensor) -> Result<Tensor> {
        self.check(y, "inn_forward")?;
        let first = y.narrow_channels(0, self.c)?;
        let second = y.narrow_channels(self.c, self.c)?;
        let second = second.add(&self.phi1.forward(&first)?)?;
        let first = first
            .mul_exp(&self.log_scale(&second)?)?
            .add(&self.phi3.forward(&second)?)?;
        let out = Tensor::concat_channels(&[first, second])?;
        out.ensure_finite("inn coupling output")?;
        Ok(out)
    }

    /// Algebraic inverse of [`InnBlock::forward`].
    pub fn inverse(&self, y: &Tensor) -> Result<Tensor> {
        self.check(y, "inn_inverse")?;
        let first = y.narrow_channels(0, self.c)?;
        let second = y.narrow_channels(self.c, self.c)?;
        let first = first
            .sub(&self.phi3.forward(&second)?)?
            .mul_exp(&self.log_scale(&second)?.neg())?;
        let second = second.sub(&self.phi1.forward(&first)?)?;
        Tensor::concat_channels(&[first, second])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentExtractorConfig {
    pub blocks: usize,
}

impl Default for ContentExtractorConfig {
    fn default() -> Self {
        Self { blocks: 2 }
    }
}

#[derive(Debug, Clone)]
pub struct ContentExtractor {
    pub lift: Conv2d,
    pub blocks: Vec<InnBlock>,
    pub drop: Conv2d,
}
impl_parameters!(ContentExtractor { lift, blocks, drop });

impl ContentExtractor {
    pub fn new(rng: &mut Rng, cfg: ContentExtractorConfig) -> Self {
        let mut lift = Conv2d::new(&mut rng.split("lift"), 3, INN_CHANNELS, 1);
        let mut drop = Conv2d::new(&mut rng.split("drop"), INN_CHANNELS, 3, 1);
        // Near-identity start: RGB rides through channels 0..3.
        lift.weight = near_identity(&lift.weight, 3, INN_CHANNELS, 0.1);
        drop.weight = near_identity(&drop.weight, INN_CHANNELS, 3, 0.05);
        Self {
            lift,
            blocks: (0..cfg.blocks)
                .map(|i| InnBlock::new(&mut rng.split(&format!("block{i}")), INN_CHANNELS / 2))
                .collect(),
            drop,
        }
    }

    /// The invertible 16-channel core.
    pub fn inn_forward(&self, y: &Tensor) -> Result<Tensor> {
        self.blocks.iter().try_fold(y.clone(), |acc, b| b.forward(&acc))
    }

    pub fn inn_inverse(&self, y: &Tensor) -> Result<Tensor> {
        self.blocks.iter().rev().try_fold(y.clone(), |acc, b| b.inverse(&acc))
    }

    pub fn forward(&self, img: &Tensor) -> Result<Tensor> {
        check_image(img, "extract_content", 1)?;
        let y = self.lift.forward(img)?;
        let y = self.inn_forward(&y)?;
        Ok(self.drop.forward(&y)?.clamp(0.0, 1.0))
    }
}

/// Scaled copy of a 1×1 conv weight plus an identity on the shared channels.
fn near_identity(w: &Tensor, c_in: usize, c_out: usize, scale: f32) -> Tensor {
    let mut data: Vec<f32> = w.data().iter().map(|v| v * scale).collect();
    for i in 0..c_in.min(c_out) {
        data[i * c_in + i] += 1.0;
    }
    Tensor::param(w.shape().to_vec(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleExtractorConfig {
    /// Token width `C_s`.
    pub width: usize,
    pub heads: usize,
    pub blocks: usize,
}

impl Default for StyleExtractorConfig {
    fn default() -> Self {
        Self {
            width: 32,
            heads: 2,
            blocks: 2,
        }
    }
}

/// Pre-norm self-attention followed by a flattened feed-forward.
#[derive(Debug, Clone)]
pub struct LtBlock {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
}
impl_parameters!(LtBlock { norm1, attn, norm2, ffn });

impl LtBlock {
    pub fn new(rng: &mut Rng, width: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(width),
            attn: MultiHeadAttention::new(&mut rng.split("attn"), width, heads)?,
            norm2: LayerNorm::new(width),
            ffn: FeedForward::new(&mut rng.split("ffn"), width, width),
        })
    }

    pub fn forward(&self, tokens: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let n = self.norm1.forward(tokens)?;
        let attn = self.attn.forward(&n, &n)?;
        let tokens = tokens.add(&attn.output)?;
        let tokens = tokens.add(&self.ffn.forward(&self.norm2.forward(&tokens)?)?)?;
        Ok((tokens, attn.weights))
    }

    pub fn ffn_param_count(&self) -> usize {
        [&self.ffn.w1, &self.ffn.b1, &self.ffn.w2, &self.ffn.b2]
            .iter()
            .map(|t| t.numel())
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct StyleExtractor {
    pub embed: Linear,
    pub lt_blocks: Vec<LtBlock>,
    pub unembed: Linear,
}
impl_parameters!(StyleExtractor { embed, lt_blocks, unembed });

pub struct StyleTrace {
    pub output: Tensor,
    /// Attention weights per block, per head.
    pub attention: Vec<Vec<Tensor>>,
}

impl StyleExtractor {
    pub fn new(rng: &mut Rng, cfg: StyleExtractorConfig) -> Result<Self> {
        let patch_dim = 3 * PATCH * PATCH;
        let mut unembed = Linear::new(&mut rng.split("unembed"), cfg.width, patch_dim);
        // Start as a mid-grey image so the output clamp is not saturated.
        unembed.weight = unembed.weight.scale(0.1).to_param();
        unembed.bias = Tensor::param(vec![patch_dim], vec![0.5; patch_dim]);
        Ok(Self {
            embed: Linear::new(&mut rng.split("embed"), patch_dim, cfg.width),
            lt_blocks: (0..cfg.blocks)
                .map(|i| LtBlock::new(&mut rng.split(&format!("block{i}")), cfg.width, cfg.heads))
                .collect::<Result<_>>()?,
            unembed,
        })
    }

    pub fn forward(&self, img: &Tensor) -> Result<Tensor> {
        Ok(self.forward_traced(img)?.output)
    }

    pub fn forward_traced(&self, img: &Tensor) -> Result<StyleTrace> {
        check_image(img, "extract_style", PATCH)?;
        let (h, w) = (img.shape()[2], img.shape()[3]);
        let mut tokens = self.embed.forward(&img.to_patches(PATCH)?)?;
        let mut attention = Vec::with_capacity(self.lt_blocks.len());
        for block in &self.lt_blocks {
            let (next, weights) = block.forward(&tokens)?;
            tokens = next;
            attention.push(weights);
        }
        let output = self
            .unembed
            .forward(&tokens)?
            .from_patches(3, h, w, PATCH)?
            .clamp(0.0, 1.0);
        Ok(StyleTrace { output, attention })
    }
}

pub(crate) fn check_image(img: &Tensor, op: &'static str, multiple: usize) -> Result<()> {
    match img.shape() {
        [1, 3, h, w] if h % multiple == 0 && w % multiple == 0 && *h > 0 && *w > 0 => Ok(()),
        [1, 3, h, w] => Err(invalid(
            op,
            format!("{h}×{w} is not divisible by {multiple}"),
        )),
        s => Err(invalid(op, format!("expected a 1×3×H×W image, got {s:?}"))),
    }
}
