//! Puff-Net style transfer from scratch.
//!
//! Layers, bottom up:
//! - [`tensor`], [`ops`]: `f32` tensors with reverse-mode autodiff and the
//!   neural primitives (matmul, conv, norms, softmax, resampling, patches).
//! - [`extractors`]: the invertible content extractor and the lite-transformer
//!   style extractor, each mapping an image to a "pure" image.
//! - [`stylizer`]: content-aware positional encoding, cross-attention encoder
//!   layers carrying the output embedding, and the CNN decoder.
//! - [`losses`]: frozen perceptual pyramid and the weighted loss system.
//! - [`trainer`]: Adam with warmup, style-extractor freeze, data pipeline and
//!   checkpoints.

pub mod error;
pub mod extractors;
pub mod gradcheck;
pub mod imageio;
pub mod layers;
pub mod losses;
pub mod mac;
pub mod model;
pub mod ops;
pub mod params;
pub mod rng;
pub mod stylizer;
pub mod synth;
pub mod tensor;
pub mod trainer;

mod init;

pub use error::{PuffError, Result};
pub use extractors::{ContentExtractor, InnBlock, StyleExtractor};
pub use losses::{LossParts, LossWeights, PerceptualNet};
pub use model::{ModelConfig, PatchSequence, PuffNetModel};
pub use params::Parameters;
pub use rng::Rng;
pub use stylizer::{AttentionMode, OutEmbedMode, PositionalEncoding, Stylizer};
pub use tensor::{no_grad, Tensor};
pub use trainer::{AdamState, Checkpoint, LossReport, TrainConfig, Trainer};

/// Patch edge length `m`.
pub const PATCH: usize = 8;
