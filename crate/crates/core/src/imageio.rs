//! PNG loading and saving as `1×3×H×W` tensors in `[0, 1]`.

use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::error::{invalid, PuffError, Result};
use crate::tensor::{no_grad, Tensor};
use crate::PATCH;

fn image_err(path: &Path, msg: impl ToString) -> PuffError {
    PuffError::Image {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

pub fn from_rgb(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            data[c * h * w + y as usize * w + x as usize] = f32::from(px[c]) / 255.0;
        }
    }
    Tensor::new(vec![1, 3, h, w], data).expect("shape matches buffer")
}

/// `round(255 · clamp(v, 0, 1))` per channel.
pub fn to_rgb(t: &Tensor) -> Result<RgbImage> {
    let (h, w) = match t.shape() {
        [1, 3, h, w] | [3, h, w] => (*h, *w),
        s => return Err(invalid("to_rgb", format!("expected 1×3×H×W, got {s:?}"))),
    };
    let d = t.data();
    let q = |v: f32| (255.0 * v.clamp(0.0, 1.0)).round() as u8;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        image::Rgb([q(d[i]), q(d[h * w + i]), q(d[2 * h * w + i])])
    }))
}

/// The tensor a PNG written from `t` reads back as.
pub fn quantize(t: &Tensor) -> Result<Tensor> {
    Ok(from_rgb(&to_rgb(t)?))
}

pub fn load_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    Ok(from_rgb(&img.to_rgb8()))
}

pub fn save_png(path: &Path, t: &Tensor) -> Result<()> {
    to_rgb(t)?
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

/// Nearest positive multiple of `m` (ties round down).
pub fn nearest_multiple(n: usize, m: usize) -> usize {
    let down = n / m * m;
    if down == 0 {
        m
    } else if n - down <= m / 2 {
        down
    } else {
        down + m
    }
}

/// Bilinearly resizes so both sides are multiples of the patch size.
pub fn fit_to_patches(img: &Tensor) -> Result<Tensor> {
    let (h, w) = match img.shape() {
        [1, 3, h, w] => (*h, *w),
        s => return Err(invalid("fit_to_patches", format!("expected 1×3×H×W, got {s:?}"))),
    };
    let (oh, ow) = (nearest_multiple(h, PATCH), nearest_multiple(w, PATCH));
    if (oh, ow) == (h, w) {
        return Ok(img.clone());
    }
    no_grad(|| img.resize_bilinear(oh, ow))
}
