//! Inputs shared by the benchmarks.

use puffnet_core::stylizer::EncoderLayer;
use puffnet_core::{synth, ModelConfig, PuffNetModel, Result, Rng, Tensor};

/// One encoder layer with content, style and positional sequences of `len` tokens.
pub struct AttentionInputs {
    pub layer: EncoderLayer,
    pub x: Tensor,
    pub style: Tensor,
    pub pos: Tensor,
}

fn tokens(len: usize, width: usize, rng: &mut Rng) -> Result<Tensor> {
    Tensor::new(vec![len, width], rng.uniform_vec(len * width, -1.0, 1.0))
}

pub fn attention_inputs(len: usize, width: usize, heads: usize, seed: u64) -> Result<AttentionInputs> {
    let mut rng = Rng::new(seed);
    Ok(AttentionInputs {
        layer: EncoderLayer::new(&mut rng.split("layer"), width, heads)?,
        x: tokens(len, width, &mut rng)?,
        style: tokens(len, width, &mut rng)?,
        pos: tokens(len, width, &mut rng)?,
    })
}

/// Default-sized model and a square content/style pair.
pub fn stylize_inputs(side: usize, seed: u64) -> Result<(PuffNetModel, Tensor, Tensor)> {
    let model = PuffNetModel::new(ModelConfig::default(), seed)?;
    Ok((model, synth::image(side, side, seed + 1), synth::image(side, side, seed + 2)))
}
