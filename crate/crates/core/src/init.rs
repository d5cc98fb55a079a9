use crate::rng::Rng;
use crate::tensor::{numel, Tensor};

/// Trainable leaf drawn uniform in `[-bound, bound)`.
pub(crate) fn uniform(rng: &mut Rng, shape: Vec<usize>, bound: f32) -> Tensor {
    let n = numel(&shape);
    Tensor::param(shape, rng.uniform_vec(n, -bound, bound))
}

/// `U(-1/√fan_in, 1/√fan_in)`, the usual default for linear and conv layers.
pub(crate) fn fan_in(rng: &mut Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    uniform(rng, shape, 1.0 / (fan_in as f32).sqrt())
}

pub(crate) fn constant(shape: Vec<usize>, value: f32) -> Tensor {
    let n = numel(&shape);
    Tensor::param(shape, vec![value; n])
}

/// He-uniform `U(-√(6/fan_in), √(6/fan_in))` for weights feeding a relu.
pub(crate) fn he(rng: &mut Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    uniform(rng, shape, (6.0 / fan_in as f32).sqrt())
}
