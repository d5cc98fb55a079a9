use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Result};
use crate::imageio::load_png;
use crate::rng::Rng;
use crate::synth;
use crate::tensor::{no_grad, Tensor};

/// `size × size` crop at a random offset. Images with a side shorter than
/// `size` are first upscaled bilinearly, keeping their aspect ratio.
pub fn random_crop(img: &Tensor, size: usize, rng: &mut Rng) -> Result<Tensor> {
    let (h, w) = match img.shape() {
        [1, 3, h, w] => (*h, *w),
        s => return Err(invalid("random_crop", format!("expected 1×3×H×W, got {s:?}"))),
    };
    if size == 0 {
        return Err(invalid("random_crop", "crop size must be positive"));
    }
    let (img, h, w) = if h < size || w < size {
        let scale = size as f64 / h.min(w) as f64;
        let oh = ((h as f64 * scale).ceil() as usize).max(size);
        let ow = ((w as f64 * scale).ceil() as usize).max(size);
        (no_grad(|| img.resize_bilinear(oh, ow))?, oh, ow)
    } else {
        (img.clone(), h, w)
    };
    let y0 = rng.below(h - size + 1);
    let x0 = rng.below(w - size + 1);
    let src = img.data();
    let mut out = Vec::with_capacity(3 * size * size);
    for c in 0..3 {
        for y in y0..y0 + size {
            let row = c * h * w + y * w;
            out.extend_from_slice(&src[row + x0..row + x0 + size]);
        }
    }
    Tensor::new(vec![1, 3, size, size], out)
}

/// PNG files directly inside `dir`, sorted by name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(invalid("dataset", format!("no PNG files in {}", dir.display())));
    }
    Ok(out)
}

/// Content and style pools, walked cyclically with an independent shuffle
/// per pool and epoch. The pair for step `t` depends only on `(seed, t)`.
#[derive(Debug, Clone)]
pub struct Dataset {
    content: Vec<Tensor>,
    style: Vec<Tensor>,
}

impl Dataset {
    pub fn from_images(content: Vec<Tensor>, style: Vec<Tensor>) -> Result<Self> {
        if content.is_empty() || style.is_empty() {
            return Err(invalid("dataset", "content and style pools must be non-empty"));
        }
        Ok(Self { content, style })
    }

    pub fn from_dirs(content_dir: &Path, style_dir: &Path) -> Result<Self> {
        let load = |dir: &Path| -> Result<Vec<Tensor>> {
            list_pngs(dir)?.iter().map(|p| load_png(p)).collect()
        };
        Self::from_images(load(content_dir)?, load(style_dir)?)
    }

    /// `n` content and `n` style images from [`crate::synth`], `size × size`.
    pub fn synthetic(n: usize, size: usize) -> Result<Self> {
        let make = |base: u64| (0..n as u64).map(|i| synth::image(size, size, base + i)).collect();
        Self::from_images(make(1000), make(2000))
    }

    pub fn len(&self) -> (usize, usize) {
        (self.content.len(), self.style.len())
    }

    fn pick(pool: &[Tensor], label: &str, seed: &Rng, t: u64) -> usize {
        let n = pool.len() as u64;
        let idx = t.saturating_sub(1);
        let (epoch, pos) = (idx / n, idx % n);
        let mut order: Vec<usize> = (0..pool.len()).collect();
        seed.split(&format!("{label}-epoch{epoch}")).shuffle(&mut order);
        order[pos as usize]
    }

    /// Cropped `(content, style)` pair for 1-based step `t`.
    pub fn batch(&self, t: u64, crop: usize, seed: &Rng) -> Result<(Tensor, Tensor)> {
        let c = &self.content[Self::pick(&self.content, "content", seed, t)];
        let s = &self.style[Self::pick(&self.style, "style", seed, t)];
        let mut rng = seed.split(&format!("crop{t}"));
        Ok((random_crop(c, crop, &mut rng)?, random_crop(s, crop, &mut rng)?))
    }
}
