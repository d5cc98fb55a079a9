use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::extractors::{
    check_image, ContentExtractor, ContentExtractorConfig, StyleExtractor, StyleExtractorConfig,
};
use crate::impl_parameters;
use crate::params::Parameters;
use crate::rng::Rng;
use crate::stylizer::{StylizeTrace, Stylizer, StylizerConfig};
use crate::tensor::Tensor;
use crate::PATCH;

/// `L × C` token matrix plus the `(H/m, W/m)` grid it came from.
#[derive(Debug, Clone)]
pub struct PatchSequence {
    pub tokens: Tensor,
    pub grid: (usize, usize),
}

impl PatchSequence {
    /// Splits `img` into 8×8 patches and projects each flattened patch with `proj`.
    pub fn from_image(img: &Tensor, proj: &Tensor) -> Result<Self> {
        let (h, w) = match img.shape() {
            [1, _, h, w] => (*h, *w),
            s => return Err(invalid("patchify", format!("expected 1×C×H×W, got {s:?}"))),
        };
        let tokens = img.to_patches(PATCH)?.matmul(proj)?;
        Ok(Self {
            tokens,
            grid: (h / PATCH, w / PATCH),
        })
    }

    pub fn len(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.tokens.shape()[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ModelConfig {
    pub content: ContentExtractorConfig,
    pub style: StyleExtractorConfig,
    pub stylizer: StylizerConfig,
}

impl ModelConfig {
    /// Paper-scale widths: `C = 192`, 8 heads.
    pub fn full_scale() -> Self {
        let mut cfg = Self::default();
        cfg.stylizer.width = 192;
        cfg.stylizer.heads = 8;
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct PuffNetModel {
    pub config: ModelConfig,
    pub content_extractor: ContentExtractor,
    pub style_extractor: StyleExtractor,
    pub stylizer: Stylizer,
}
impl_parameters!(PuffNetModel {
    content_extractor,
    style_extractor,
    stylizer
});

/// Prefix of every style-extractor parameter name.
pub const STYLE_EXTRACTOR_PREFIX: &str = "style_extractor";
/// Prefix of the CAPE parameters.
pub const CAPE_PREFIX: &str = "stylizer.cape";

/// Everything produced by one end-to-end pass.
pub struct FullTrace {
    pub pure_content: Tensor,
    pub pure_style: Tensor,
    pub stylize: StylizeTrace,
}

impl PuffNetModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let root = Rng::new(seed);
        Ok(Self {
            config,
            content_extractor: ContentExtractor::new(&mut root.split("content_extractor"), config.content),
            style_extractor: StyleExtractor::new(&mut root.split("style_extractor"), config.style)?,
            stylizer: Stylizer::new(&mut root.split("stylizer"), config.stylizer)?,
        })
    }

    pub fn extract_content(&self, img: &Tensor) -> Result<Tensor> {
        self.content_extractor.forward(img)
    }

    pub fn extract_style(&self, img: &Tensor) -> Result<Tensor> {
        self.style_extractor.forward(img)
    }

    /// Stylizes `content` with `style`; both `1×3×H×W`, H and W multiples of 8.
    pub fn stylize(&self, content: &Tensor, style: &Tensor, rng: Option<&mut Rng>) -> Result<Tensor> {
        Ok(self.stylize_traced(content, style, rng)?.stylize.output)
    }

    pub fn stylize_traced(
        &self,
        content: &Tensor,
        style: &Tensor,
        rng: Option<&mut Rng>,
    ) -> Result<FullTrace> {
        check_image(content, "stylize", PATCH)?;
        check_image(style, "stylize", PATCH)?;
        let pure_content = self.extract_content(content)?;
        let pure_style = self.extract_style(style)?;
        let stylize = self.stylizer.forward_traced(&pure_content, &pure_style, rng)?;
        Ok(FullTrace {
            pure_content,
            pure_style,
            stylize,
        })
    }

    /// Replaces every parameter whose name starts with `prefix` by a
    /// gradient-free copy. Values are untouched.
    pub fn freeze(&mut self, prefix: &str) {
        self.visit_params_mut("", &mut |name, t| {
            if name.starts_with(prefix) && t.requires_grad() {
                *t = t.detach();
            }
        });
    }

    /// Makes every parameter trainable again, keeping values.
    pub fn unfreeze_all(&mut self) {
        self.visit_params_mut("", &mut |_, t| {
            if !t.requires_grad() {
                *t = t.to_param();
            }
        });
    }
}
