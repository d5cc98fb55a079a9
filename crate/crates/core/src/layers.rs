//! Parameterised building blocks shared by the extractors and the stylizer.

use crate::error::{invalid, Result};
use crate::impl_parameters;
use crate::init;
use crate::mac::{self, MacTag};
use crate::ops::LAYER_NORM_EPS;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
}
impl_parameters!(Conv2d { weight, bias });

impl Conv2d {
    pub fn new(rng: &mut Rng, c_in: usize, c_out: usize, k: usize) -> Self {
        Self {
            weight: init::fan_in(rng, vec![c_out, c_in, k, k], c_in * k * k),
            bias: init::fan_in(rng, vec![c_out], c_in * k * k),
        }
    }

    /// Same as [`Conv2d::new`] but with He-scaled weights, for convs
    /// followed by a relu.
    pub fn new_relu(rng: &mut Rng, c_in: usize, c_out: usize, k: usize) -> Self {
        Self {
            weight: init::he(rng, vec![c_out, c_in, k, k], c_in * k * k),
            bias: init::fan_in(rng, vec![c_out], c_in * k * k),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.conv2d(&self.weight, Some(&self.bias), 1)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// `x · W + b` with `W` stored `in × out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}
impl_parameters!(Linear { weight, bias });

impl Linear {
    pub fn new(rng: &mut Rng, d_in: usize, d_out: usize) -> Self {
        Self {
            weight: init::fan_in(rng, vec![d_in, d_out], d_in),
            bias: init::fan_in(rng, vec![d_out], d_in),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.linear(&self.weight, Some(&self.bias))
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
}
impl_parameters!(LayerNorm { gain, bias });

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gain: init::constant(vec![width], 1.0),
            bias: init::constant(vec![width], 0.0),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.layer_norm(&self.gain, &self.bias, LAYER_NORM_EPS)
    }
}

/// `max(0, x·W₁ + b₁)·W₂ + b₂`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}
impl_parameters!(FeedForward { w1, b1, w2, b2 });

impl FeedForward {
    pub fn new(rng: &mut Rng, width: usize, hidden: usize) -> Self {
        Self {
            w1: init::fan_in(rng, vec![width, hidden], width),
            b1: init::fan_in(rng, vec![hidden], width),
            w2: init::fan_in(rng, vec![hidden, width], hidden),
            b2: init::fan_in(rng, vec![width], hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b1.numel()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.linear(&self.w1, Some(&self.b1))?
            .relu()
            .linear(&self.w2, Some(&self.b2))
    }
}

/// Multi-head scaled dot-product attention without projection biases.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub heads: usize,
}
impl_parameters!(MultiHeadAttention { w_q, w_k, w_v, w_o });

pub struct AttentionOutput {
    pub output: Tensor,
    /// One `L × L_kv` weight matrix per head.
    pub weights: Vec<Tensor>,
}

impl MultiHeadAttention {
    pub fn new(rng: &mut Rng, width: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !width.is_multiple_of(heads) {
            return Err(invalid(
                "attention",
                format!("width {width} not divisible by {heads} heads"),
            ));
        }
        let proj = |name: &str| init::fan_in(&mut rng.split(name), vec![width, width], width);
        Ok(Self {
            w_q: proj("w_q"),
            w_k: proj("w_k"),
            w_v: proj("w_v"),
            w_o: proj("w_o"),
            heads,
        })
    }

    pub fn width(&self) -> usize {
        self.w_o.shape()[1]
    }

    /// Queries from `query_src`, keys and values from `kv_src`.
    pub fn forward(&self, query_src: &Tensor, kv_src: &Tensor) -> Result<AttentionOutput> {
        let c = self.width();
        let (qc, kc) = (query_src.shape().last(), kv_src.shape().last());
        if qc != Some(&c) || kc != Some(&c) {
            return Err(crate::error::shape_err(
                "attention",
                query_src.shape(),
                kv_src.shape(),
            ));
        }
        let d = c / self.heads;
        let scale = 1.0 / (d as f32).sqrt();
        let (q, k, v) = mac::tagged(MacTag::Projection, || -> Result<_> {
            Ok((
                query_src.matmul(&self.w_q)?,
                kv_src.matmul(&self.w_k)?,
                kv_src.matmul(&self.w_v)?,
            ))
        })?;
        let mut heads = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.narrow_cols(h * d, d)?;
            let kh = k.narrow_cols(h * d, d)?;
            let vh = v.narrow_cols(h * d, d)?;
            let (head, attn) = mac::tagged(MacTag::Quadratic, || -> Result<_> {
                let attn = qh.matmul(&kh.transpose()?)?.scale(scale).softmax()?;
                Ok((attn.matmul(&vh)?, attn))
            })?;
            heads.push(head);
            weights.push(attn);
        }
        let merged = if heads.len() == 1 {
            heads.pop().expect("one head")
        } else {
            Tensor::concat_cols(&heads)?
        };
        let output = mac::tagged(MacTag::Projection, || merged.matmul(&self.w_o))?;
        Ok(AttentionOutput { output, weights })
    }
}
