//! Deterministic synthetic images for fixtures, demos and benches.
//!
//! Each channel is a low-frequency plane wave plus a few soft-edged discs,
//! so the pictures have structure at several scales but no pixel noise.

use std::f32::consts::TAU;

use crate::rng::Rng;
use crate::tensor::Tensor;

/// A `1×3×h×w` image in `[0, 1]` that depends only on `(h, w, seed)`.
pub fn image(h: usize, w: usize, seed: u64) -> Tensor {
    let root = Rng::new(seed);
    let mut data = vec![0.0f32; 3 * h * w];
    let mut shapes = root.split("discs");
    let discs: Vec<[f32; 6]> = (0..4)
        .map(|_| {
            [
                shapes.uniform(0.15, 0.85),
                shapes.uniform(0.15, 0.85),
                shapes.uniform(0.08, 0.25),
                shapes.uniform(-0.3, 0.3),
                shapes.uniform(-0.3, 0.3),
                shapes.uniform(-0.3, 0.3),
            ]
        })
        .collect();
    for c in 0..3 {
        let mut r = root.split(&format!("wave{c}"));
        let (fx, fy) = (r.uniform(0.5, 3.0), r.uniform(0.5, 3.0));
        let (px, py) = (r.uniform(0.0, TAU), r.uniform(0.0, TAU));
        let base = r.uniform(0.35, 0.65);
        for y in 0..h {
            let v = y as f32 / h.max(1) as f32;
            for x in 0..w {
                let u = x as f32 / w.max(1) as f32;
                let mut p = base + 0.2 * (TAU * fx * u + px).sin() * (TAU * fy * v + py).cos();
                for d in &discs {
                    let dist = ((u - d[0]).powi(2) + (v - d[1]).powi(2)).sqrt();
                    let edge = ((d[2] - dist) / 0.02).clamp(0.0, 1.0);
                    p += edge * d[3 + c];
                }
                data[c * h * w + y * w + x] = p.clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(vec![1, 3, h, w], data).expect("shape matches buffer")
}
