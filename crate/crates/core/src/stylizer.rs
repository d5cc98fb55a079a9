//! Encoder-only stylization transformer and CNN decoder.
//!
//! Queries come from the evolving output stream plus a positional signal,
//! keys and values always from the style sequence. The stream starts as the
//! initial output embedding (a copy of the content sequence by default) and
//! each layer adds its attention and feed-forward updates residually.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, PuffError, Result};
use crate::impl_parameters;
use crate::layers::{Conv2d, FeedForward, LayerNorm, MultiHeadAttention};
use crate::model::PatchSequence;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::PATCH;

/// How the output stream is seeded before the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutEmbedMode {
    #[default]
    Content,
    Style,
    Zero,
    Random,
}

impl OutEmbedMode {
    pub const ALL: [OutEmbedMode; 4] = [Self::Content, Self::Style, Self::Zero, Self::Random];

    pub fn name(self) -> &'static str {
        match self {
            Self::Content => "content",
            Self::Style => "style",
            Self::Zero => "zero",
            Self::Random => "random",
        }
    }
}

impl std::str::FromStr for OutEmbedMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown out_embed mode `{s}` (content|style|zero|random)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PositionalEncoding {
    #[default]
    Cape,
    Sinusoidal,
}

impl PositionalEncoding {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cape => "cape",
            Self::Sinusoidal => "sinusoidal",
        }
    }
}

impl std::str::FromStr for PositionalEncoding {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cape" => Ok(Self::Cape),
            "sinusoidal" => Ok(Self::Sinusoidal),
            _ => Err(format!("unknown positional encoding `{s}` (cape|sinusoidal)")),
        }
    }
}

/// Range of the `random` output-embedding initialisation.
pub const RANDOM_EMBED_SCALE: f32 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StylizerConfig {
    /// Embedding width `C`.
    pub width: usize,
    pub heads: usize,
    pub layers: usize,
    /// Pooled CAPE grid edge.
    pub cape_grid: usize,
    pub positional: PositionalEncoding,
    pub out_embed: OutEmbedMode,
}

impl Default for StylizerConfig {
    fn default() -> Self {
        Self {
            width: 32,
            heads: 2,
            layers: 3,
            cape_grid: 18,
            positional: PositionalEncoding::Cape,
            out_embed: OutEmbedMode::Content,
        }
    }
}

/// Content-aware positional encoding: pool the content grid to a fixed
/// size, mix channels with a learnable 1×1 conv, interpolate back.
#[derive(Debug, Clone)]
pub struct Cape {
    pub pool_grid: usize,
    pub mix: Conv2d,
}
impl_parameters!(Cape { mix });

impl Cape {
    pub fn new(rng: &mut Rng, width: usize, pool_grid: usize) -> Self {
        Self {
            pool_grid,
            mix: Conv2d::new(rng, width, width, 1),
        }
    }

    pub fn forward(&self, eps_c: &PatchSequence) -> Result<Tensor> {
        let (gh, gw) = eps_c.grid;
        if gh == 0 || gw == 0 {
            return Err(invalid("cape", "grid smaller than 1×1"));
        }
        let grid = eps_c.tokens.seq_to_grid(gh, gw)?;
        let pooled = grid.adaptive_avg_pool(self.pool_grid, self.pool_grid)?;
        let mixed = self.mix.forward(&pooled)?;
        mixed.resize_bilinear(gh, gw)?.grid_to_seq()
    }
}

/// Interleaved sine/cosine table: `pe[p, 2i] = sin(p / 10000^(2i/C))`,
/// `pe[p, 2i+1] = cos(...)`.
pub fn sinusoidal_pe(len: usize, width: usize) -> Result<Tensor> {
    if !width.is_multiple_of(2) {
        return Err(invalid("sinusoidal_pe", format!("width {width} must be even")));
    }
    let mut data = vec![0.0f32; len * width];
    for p in 0..len {
        for i in 0..width / 2 {
            let freq = 10000f64.powf(-((2 * i) as f64) / width as f64);
            let a = p as f64 * freq;
            data[p * width + 2 * i] = a.sin() as f32;
            data[p * width + 2 * i + 1] = a.cos() as f32;
        }
    }
    Tensor::new(vec![len, width], data)
}

#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
}
impl_parameters!(EncoderLayer { norm1, attn, norm2, ffn });

/// Attention output plus the per-head weights.
pub struct AttentionResult {
    pub output: Tensor,
    pub weights: Vec<Tensor>,
}

impl EncoderLayer {
    pub fn new(rng: &mut Rng, width: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(width),
            attn: MultiHeadAttention::new(&mut rng.split("attn"), width, heads)?,
            norm2: LayerNorm::new(width),
            ffn: FeedForward::new(&mut rng.split("ffn"), width, 2 * width),
        })
    }

    /// `softmax(((x + pos) W_q)(ε_s W_k)ᵀ / √d) (ε_s W_v)` per head, then `W_o`.
    pub fn attention(&self, x: &Tensor, eps_s: &Tensor, pos: &Tensor) -> Result<AttentionResult> {
        if x.shape() != pos.shape() {
            return Err(shape_err("attention", x.shape(), pos.shape()));
        }
        let out = self.attn.forward(&x.add(pos)?, eps_s)?;
        Ok(AttentionResult {
            output: out.output,
            weights: out.weights,
        })
    }

    /// `Y' = MSA(norm(stream)) + stream`, `Y = FFN(norm(Y')) + Y'`.
    pub fn forward(&self, stream: &Tensor, eps_s: &Tensor, pos: &Tensor) -> Result<Tensor> {
        let attn = self.attention(&self.norm1.forward(stream)?, eps_s, pos)?;
        let y = attn.output.add(stream)?;
        self.ffn.forward(&self.norm2.forward(&y)?)?.add(&y)
    }
}

/// Three (3×3 conv → relu → 2× upsample) stages and a 3×3 conv to RGB.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub stages: Vec<Conv2d>,
    pub head: Conv2d,
}
impl_parameters!(Decoder { stages, head });

impl Decoder {
    pub fn new(rng: &mut Rng, width: usize) -> Self {
        let widths = [width, (width / 2).max(8), (width / 4).max(8)];
        let mut c_in = width;
        let stages = widths
            .iter()
            .enumerate()
            .map(|(i, &c_out)| {
                let conv = Conv2d::new(&mut rng.split(&format!("stage{i}")), c_in, c_out, 3);
                c_in = c_out;
                conv
            })
            .collect();
        let mut head = Conv2d::new(&mut rng.split("head"), c_in, 3, 3);
        head.weight = head.weight.scale(0.1).to_param();
        head.bias = Tensor::param(vec![3], vec![0.5; 3]);
        Self { stages, head }
    }

    pub fn forward(&self, grid: &Tensor) -> Result<Tensor> {
        let mut x = grid.clone();
        for stage in &self.stages {
            x = stage.forward(&x)?.relu().upsample2x()?;
        }
        Ok(self.head.forward(&x)?.clamp(0.0, 1.0))
    }
}

/// Patch embedding, positional encoding, encoder stack and decoder.
#[derive(Debug, Clone)]
pub struct Stylizer {
    pub config: StylizerConfig,
    /// Shared `(3·m²) × C` patch projection.
    pub embed: Tensor,
    pub cape: Cape,
    pub layers: Vec<EncoderLayer>,
    pub decoder: Decoder,
}
impl_parameters!(Stylizer { embed, cape, layers, decoder });

/// Intermediate values of one stylization pass.
pub struct StylizeTrace {
    pub eps_c: PatchSequence,
    pub eps_s: PatchSequence,
    pub pos: Tensor,
    pub eps_o_init: Tensor,
    pub eps_o: Tensor,
    pub output: Tensor,
}

impl Stylizer {
    pub fn new(rng: &mut Rng, config: StylizerConfig) -> Result<Self> {
        let patch_dim = 3 * PATCH * PATCH;
        Ok(Self {
            config,
            embed: crate::init::fan_in(&mut rng.split("embed"), vec![patch_dim, config.width], patch_dim),
            cape: Cape::new(&mut rng.split("cape"), config.width, config.cape_grid),
            layers: (0..config.layers)
                .map(|i| EncoderLayer::new(&mut rng.split(&format!("layer{i}")), config.width, config.heads))
                .collect::<Result<_>>()?,
            decoder: Decoder::new(&mut rng.split("decoder"), config.width),
        })
    }

    pub fn patchify(&self, img: &Tensor) -> Result<PatchSequence> {
        PatchSequence::from_image(img, &self.embed)
    }

    pub fn positional(&self, eps_c: &PatchSequence) -> Result<Tensor> {
        match self.config.positional {
            PositionalEncoding::Cape => self.cape.forward(eps_c),
            PositionalEncoding::Sinusoidal => sinusoidal_pe(eps_c.len(), self.config.width),
        }
    }

    pub fn init_out_embed(
        &self,
        eps_c: &PatchSequence,
        eps_s: &PatchSequence,
        rng: Option<&mut Rng>,
    ) -> Result<Tensor> {
        match self.config.out_embed {
            OutEmbedMode::Content => Ok(eps_c.tokens.clone()),
            OutEmbedMode::Style => {
                if eps_s.tokens.shape() != eps_c.tokens.shape() {
                    return Err(shape_err(
                        "out_embed=style",
                        eps_c.tokens.shape(),
                        eps_s.tokens.shape(),
                    ));
                }
                Ok(eps_s.tokens.clone())
            }
            OutEmbedMode::Zero => Ok(Tensor::zeros(eps_c.tokens.shape().to_vec())),
            OutEmbedMode::Random => {
                let rng = rng.ok_or(PuffError::MissingRng)?;
                let shape = eps_c.tokens.shape().to_vec();
                let n = shape.iter().product();
                Tensor::new(shape, rng.uniform_vec(n, -RANDOM_EMBED_SCALE, RANDOM_EMBED_SCALE))
            }
        }
    }

    /// Stylizes already-extracted pure content and style images.
    pub fn forward_traced(
        &self,
        pure_content: &Tensor,
        pure_style: &Tensor,
        rng: Option<&mut Rng>,
    ) -> Result<StylizeTrace> {
        let eps_c = self.patchify(pure_content)?;
        let eps_s = self.patchify(pure_style)?;
        let pos = self.positional(&eps_c)?;
        let eps_o_init = self.init_out_embed(&eps_c, &eps_s, rng)?;
        let mut stream = eps_o_init.clone();
        for layer in &self.layers {
            stream = layer.forward(&stream, &eps_s.tokens, &pos)?;
        }
        let (gh, gw) = eps_c.grid;
        let output = self.decoder.forward(&stream.seq_to_grid(gh, gw)?)?;
        Ok(StylizeTrace {
            eps_c,
            eps_s,
            pos,
            eps_o_init,
            eps_o: stream,
            output,
        })
    }
}

/// Which sequences feed one attention layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionMode {
    /// Queries from the L-token output stream, keys/values from L style tokens.
    Cross,
    /// Self-attention over the 2L-token concatenation of both sequences.
    ConcatSelf,
}

impl std::str::FromStr for AttentionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cross" => Ok(Self::Cross),
            "concat_self" | "concat-self" => Ok(Self::ConcatSelf),
            _ => Err(format!("unknown attention mode `{s}`")),
        }
    }
}

/// Closed-form MACs of one attention layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionCost {
    /// Score and weighted-value products.
    pub quadratic: u64,
    /// W_q, W_k, W_v and W_o.
    pub projection: u64,
}

impl AttentionCost {
    pub fn total(&self) -> u64 {
        self.quadratic + self.projection
    }
}

pub fn attention_cost(len: usize, width: usize, mode: AttentionMode) -> AttentionCost {
    let c = width as u64;
    let n = match mode {
        AttentionMode::Cross => len as u64,
        AttentionMode::ConcatSelf => 2 * len as u64,
    };
    AttentionCost {
        quadratic: 2 * n * n * c,
        projection: 4 * n * c * c,
    }
}

/// Runs one live attention pass in `mode` over `stream` (L×C) and
/// `eps_s` (L×C); used to check [`attention_cost`] against the counter.
pub fn attention_pass(
    layer: &EncoderLayer,
    stream: &Tensor,
    eps_s: &Tensor,
    pos: &Tensor,
    mode: AttentionMode,
) -> Result<Tensor> {
    match mode {
        AttentionMode::Cross => Ok(layer.attention(stream, eps_s, pos)?.output),
        AttentionMode::ConcatSelf => {
            let joint = Tensor::concat_rows(&[stream.add(pos)?, eps_s.clone()])?;
            Ok(layer.attn.forward(&joint, &joint)?.output)
        }
    }
}
