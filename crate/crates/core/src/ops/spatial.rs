//! NCHW image ops: convolution, resampling, channel slicing, patch layout.

use super::gemm::{gemm, View};
use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

fn dims4(t: &Tensor, op: &'static str) -> Result<[usize; 4]> {
    match t.shape() {
        &[b, c, h, w] => Ok([b, c, h, w]),
        s => Err(invalid(op, format!("expected B×C×H×W, got {s:?}"))),
    }
}

struct ConvGeom {
    ci: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    stride: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.ci * self.k * self.k
    }
    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col(x: &[f32], g: &ConvGeom) -> Vec<f32> {
    let mut cols = vec![0.0; g.rows() * g.cols()];
    for c in 0..g.ci {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * g.cols()..(row + 1) * g.cols()];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..][..g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * g.wo + ox] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f32], g: &ConvGeom, dx: &mut [f32]) {
    for c in 0..g.ci {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * g.cols()..(row + 1) * g.cols()];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut dx[(c * g.h + iy as usize) * g.w..][..g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Per-axis bilinear taps with half-pixel centres (`align_corners = false`).
pub(crate) fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f32, f32)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            let l1 = (src - i0 as f64) as f32;
            let l1 = if i1 == i0 { 0.0 } else { l1 };
            (i0, i1, 1.0 - l1, l1)
        })
        .collect()
}

/// Bilinear resize of raw CHW planes; shared with the image pipeline.
pub(crate) fn resize_planes(x: &[f32], planes: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let at = |y: usize, x: usize| f64::from(src[y * w + x]);
                let (wy0, wy1, wx0, wx1) = (f64::from(wy0), f64::from(wy1), f64::from(wx0), f64::from(wx1));
                let v = wy0 * (wx0 * at(y0, x0) + wx1 * at(y0, x1)) + wy1 * (wx0 * at(y1, x0) + wx1 * at(y1, x1));
                dst[oy * ow + ox] = v as f32;
            }
        }
    }
    out
}

fn adaptive_bins(input: usize, output: usize) -> Vec<(usize, usize)> {
    (0..output)
        .map(|i| {
            let start = i * input / output;
            let end = ((i + 1) * input).div_ceil(output);
            (start, end.max(start + 1))
        })
        .collect()
}

impl Tensor {
    /// 2-d convolution with square kernel `k ∈ {1, 3}`, padding `k / 2`.
    pub fn conv2d(&self, weight: &Tensor, bias: Option<&Tensor>, stride: usize) -> Result<Tensor> {
        let [b, ci, h, w] = dims4(self, "conv2d")?;
        let [co, wci, k, k2] = dims4(weight, "conv2d")?;
        if wci != ci {
            return Err(shape_err("conv2d", self.shape(), weight.shape()));
        }
        if k != k2 || !(k == 1 || k == 3) {
            return Err(invalid("conv2d", format!("kernel {k}×{k2} unsupported")));
        }
        if !(stride == 1 || stride == 2) {
            return Err(invalid("conv2d", format!("stride {stride} unsupported")));
        }
        if let Some(bias) = bias {
            if bias.numel() != co {
                return Err(shape_err("conv2d", weight.shape(), bias.shape()));
            }
        }
        let pad = k / 2;
        let geom = ConvGeom {
            ci,
            h,
            w,
            k,
            pad,
            stride,
            ho: (h + 2 * pad - k) / stride + 1,
            wo: (w + 2 * pad - k) / stride + 1,
        };
        let (ho, wo) = (geom.ho, geom.wo);
        let in_plane = ci * h * w;
        let out_plane = co * ho * wo;
        let mut out = vec![0.0; b * out_plane];
        for n in 0..b {
            let x = &self.data()[n * in_plane..(n + 1) * in_plane];
            let dst = &mut out[n * out_plane..(n + 1) * out_plane];
            if let Some(bias) = bias {
                for (o, &bv) in bias.data().iter().enumerate() {
                    dst[o * ho * wo..(o + 1) * ho * wo].fill(bv);
                }
            }
            let beta = if bias.is_some() { 1.0 } else { 0.0 };
            if k == 1 && stride == 1 {
                gemm(View::new(weight.data(), co, ci), View::new(x, ci, h * w), beta, dst);
            } else {
                let cols = im2col(x, &geom);
                gemm(
                    View::new(weight.data(), co, geom.rows()),
                    View::new(&cols, geom.rows(), geom.cols()),
                    beta,
                    dst,
                );
            }
        }

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(bias) = bias {
            parents.push(bias.clone());
        }
        let (xc, wc) = (self.clone(), weight.clone());
        let has_bias = bias.is_some();
        Ok(Tensor::from_op(vec![b, co, ho, wo], out, parents, move || {
            Box::new(move |g, needs| {
                let rows = geom.rows();
                let cols_n = geom.cols();
                let mut dx = needs[0].then(|| vec![0.0; b * in_plane]);
                let mut dw = needs[1].then(|| vec![0.0; co * rows]);
                let mut db = (has_bias && needs[2]).then(|| vec![0.0; co]);
                for n in 0..b {
                    let gn = &g[n * out_plane..(n + 1) * out_plane];
                    let x = &xc.data()[n * in_plane..(n + 1) * in_plane];
                    let direct = k == 1 && stride == 1;
                    let cols = if direct { None } else { Some(im2col(x, &geom)) };
                    let cols_ref: &[f32] = cols.as_deref().unwrap_or(x);
                    if let Some(dw) = dw.as_mut() {
                        gemm(
                            View::new(gn, co, cols_n),
                            View::new(cols_ref, rows, cols_n).t(),
                            1.0,
                            dw,
                        );
                    }
                    if let Some(dx) = dx.as_mut() {
                        let dxn = &mut dx[n * in_plane..(n + 1) * in_plane];
                        if direct {
                            gemm(View::new(wc.data(), co, rows).t(), View::new(gn, co, cols_n), 0.0, dxn);
                        } else {
                            let mut dcols = vec![0.0; rows * cols_n];
                            gemm(
                                View::new(wc.data(), co, rows).t(),
                                View::new(gn, co, cols_n),
                                0.0,
                                &mut dcols,
                            );
                            col2im(&dcols, &geom, dxn);
                        }
                    }
                    if let Some(db) = db.as_mut() {
                        for (o, d) in db.iter_mut().enumerate() {
                            *d += gn[o * cols_n..(o + 1) * cols_n].iter().sum::<f32>();
                        }
                    }
                }
                let mut grads = vec![dx, dw];
                if has_bias {
                    grads.push(db);
                }
                grads
            })
        }))
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2x(&self) -> Result<Tensor> {
        let [b, c, h, w] = dims4(self, "upsample2x")?;
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0; b * c * oh * ow];
        for p in 0..b * c {
            let src = &self.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..oh {
                for x in 0..ow {
                    dst[y * ow + x] = src[(y / 2) * w + x / 2];
                }
            }
        }
        Ok(Tensor::from_op(vec![b, c, oh, ow], out, vec![self.clone()], move || {
            Box::new(move |g, _| {
                let mut d = vec![0.0; b * c * h * w];
                for p in 0..b * c {
                    let gp = &g[p * oh * ow..(p + 1) * oh * ow];
                    let dp = &mut d[p * h * w..(p + 1) * h * w];
                    for y in 0..oh {
                        for x in 0..ow {
                            dp[(y / 2) * w + x / 2] += gp[y * ow + x];
                        }
                    }
                }
                vec![Some(d)]
            })
        }))
    }

    /// 2×2 average pool with stride 2; an odd trailing row or column is dropped.
    pub fn avg_pool2x(&self) -> Result<Tensor> {
        let [b, c, h, w] = dims4(self, "avg_pool2x")?;
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(invalid("avg_pool2x", format!("{h}×{w} too small to pool")));
        }
        let mut out = vec![0.0; b * c * oh * ow];
        for p in 0..b * c {
            let src = &self.data()[p * h * w..(p + 1) * h * w];
            for y in 0..oh {
                for x in 0..ow {
                    let s = src[2 * y * w + 2 * x]
                        + src[2 * y * w + 2 * x + 1]
                        + src[(2 * y + 1) * w + 2 * x]
                        + src[(2 * y + 1) * w + 2 * x + 1];
                    out[(p * oh + y) * ow + x] = 0.25 * s;
                }
            }
        }
        Ok(Tensor::from_op(vec![b, c, oh, ow], out, vec![self.clone()], move || {
            Box::new(move |g, _| {
                let mut d = vec![0.0; b * c * h * w];
                for p in 0..b * c {
                    for y in 0..oh {
                        for x in 0..ow {
                            let v = 0.25 * g[(p * oh + y) * ow + x];
                            let base = p * h * w;
                            d[base + 2 * y * w + 2 * x] += v;
                            d[base + 2 * y * w + 2 * x + 1] += v;
                            d[base + (2 * y + 1) * w + 2 * x] += v;
                            d[base + (2 * y + 1) * w + 2 * x + 1] += v;
                        }
                    }
                }
                vec![Some(d)]
            })
        }))
    }

    /// Adaptive average pooling to `oh × ow` bins (bins may overlap when
    /// the output is larger than the input).
    pub fn adaptive_avg_pool(&self, oh: usize, ow: usize) -> Result<Tensor> {
        let [b, c, h, w] = dims4(self, "adaptive_avg_pool")?;
        if oh == 0 || ow == 0 || h == 0 || w == 0 {
            return Err(invalid("adaptive_avg_pool", "empty grid"));
        }
        let by = adaptive_bins(h, oh);
        let bx = adaptive_bins(w, ow);
        let mut out = vec![0.0; b * c * oh * ow];
        for p in 0..b * c {
            let src = &self.data()[p * h * w..(p + 1) * h * w];
            for (y, &(y0, y1)) in by.iter().enumerate() {
                for (x, &(x0, x1)) in bx.iter().enumerate() {
                    let mut s = 0.0f64;
                    for yy in y0..y1 {
                        for xx in x0..x1 {
                            s += f64::from(src[yy * w + xx]);
                        }
                    }
                    out[(p * oh + y) * ow + x] = (s / ((y1 - y0) * (x1 - x0)) as f64) as f32;
                }
            }
        }
        Ok(Tensor::from_op(vec![b, c, oh, ow], out, vec![self.clone()], move || {
            Box::new(move |g, _| {
                let mut d = vec![0.0; b * c * h * w];
                for p in 0..b * c {
                    for (y, &(y0, y1)) in by.iter().enumerate() {
                        for (x, &(x0, x1)) in bx.iter().enumerate() {
                            let v = g[(p * oh + y) * ow + x] / ((y1 - y0) * (x1 - x0)) as f32;
                            for yy in y0..y1 {
                                for xx in x0..x1 {
                                    d[p * h * w + yy * w + xx] += v;
                                }
                            }
                        }
                    }
                }
                vec![Some(d)]
            })
        }))
    }

    /// Bilinear resize with half-pixel centres.
    pub fn resize_bilinear(&self, oh: usize, ow: usize) -> Result<Tensor> {
        let [b, c, h, w] = dims4(self, "resize_bilinear")?;
        if oh == 0 || ow == 0 || h == 0 || w == 0 {
            return Err(invalid("resize_bilinear", "empty grid"));
        }
        let out = resize_planes(self.data(), b * c, h, w, oh, ow);
        Ok(Tensor::from_op(vec![b, c, oh, ow], out, vec![self.clone()], move || {
            Box::new(move |g, _| {
                let ty = bilinear_taps(h, oh);
                let tx = bilinear_taps(w, ow);
                let mut d = vec![0.0; b * c * h * w];
                for p in 0..b * c {
                    let gp = &g[p * oh * ow..(p + 1) * oh * ow];
                    let dp = &mut d[p * h * w..(p + 1) * h * w];
                    for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
                        for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                            let gv = gp[oy * ow + ox];
                            dp[y0 * w + x0] += gv * wy0 * wx0;
                            dp[y0 * w + x1] += gv * wy0 * wx1;
                            dp[y1 * w + x0] += gv * wy1 * wx0;
                            dp[y1 * w + x1] += gv * wy1 * wx1;
                        }
                    }
                }
                vec![Some(d)]
            })
        }))
    }

    /// Channels `[start, start+len)`.
    pub fn narrow_channels(&self, start: usize, len: usize) -> Result<Tensor> {
        let [b, c, h, w] = dims4(self, "narrow_channels")?;
        if len == 0 || start + len > c {
            return Err(invalid(
                "narrow_channels",
                format!("range {start}..{} outside {c} channels", start + len),
            ));
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(b * len * plane);
        for n in 0..b {
            let base = (n * c + start) * plane;
            out.extend_from_slice(&self.data()[base..base + len * plane]);
        }
        Ok(Tensor::from_op(vec![b, len, h, w], out, vec![self.clone()], move || {
            Box::new(move |g, _| {
                let mut d = vec![0.0; b * c * plane];
                for n in 0..b {
                    let base = (n * c + start) * plane;
                    d[base..base + len * plane]
                        .copy_from_slice(&g[n * len * plane..(n + 1) * len * plane]);
                }
                vec![Some(d)]
            })
        }))
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| invalid("concat_channels", "no inputs"))?;
        let [b, _, h, w] = dims4(first, "concat_channels")?;
        let mut chans = Vec::with_capacity(parts.len());
        for p in parts {
            let [pb, pc, ph, pw] = dims4(p, "concat_channels")?;
            if (pb, ph, pw) != (b, h, w) {
                return Err(shape_err("concat_channels", first.shape(), p.shape()));
            }
            chans.push(pc);
        }
        let total: usize = chans.iter().sum();
        let plane = h * w;
        let mut out = Vec::with_capacity(b * total * plane);
        for n in 0..b {
            for (p, &pc) in parts.iter().zip(&chans) {
                out.extend_from_slice(&p.data()[n * pc * plane..(n + 1) * pc * plane]);
            }
        }
        Ok(Tensor::from_op(vec![b, total, h, w], out, parts.to_vec(), move || {
            Box::new(move |g, needs| {
                let mut offset = 0;
                let mut grads = Vec::with_capacity(chans.len());
                for (&pc, &need) in chans.iter().zip(needs) {
                    grads.push(need.then(|| {
                        let mut d = Vec::with_capacity(b * pc * plane);
                        for n in 0..b {
                            let base = (n * total + offset) * plane;
                            d.extend_from_slice(&g[base..base + pc * plane]);
                        }
                        d
                    }));
                    offset += pc;
                }
                grads
            })
        }))
    }

    /// Rearranges a `1×C×H×W` image into `L × (m·m·C)` patch rows, patches in
    /// raster order and each row laid out as (dy, dx, channel).
    pub fn to_patches(&self, m: usize) -> Result<Tensor> {
        let [b, c, h, w] = dims4(self, "to_patches")?;
        if b != 1 {
            return Err(invalid("to_patches", format!("batch size must be 1, got {b}")));
        }
        if m == 0 || h % m != 0 || w % m != 0 {
            return Err(invalid(
                "to_patches",
                format!("{h}×{w} is not divisible by patch size {m}"),
            ));
        }
        let idx = patch_index(c, h, w, m);
        let out: Vec<f32> = idx.iter().map(|&i| self.data()[i]).collect();
        let (l, width) = ((h / m) * (w / m), m * m * c);
        let n = self.numel();
        Ok(Tensor::from_op(vec![l, width], out, vec![self.clone()], move || {
            Box::new(move |g, _| {
                let mut d = vec![0.0; n];
                for (gv, &i) in g.iter().zip(&idx) {
                    d[i] = *gv;
                }
                vec![Some(d)]
            })
        }))
    }

    /// Inverse of [`Tensor::to_patches`].
    pub fn from_patches(&self, c: usize, h: usize, w: usize, m: usize) -> Result<Tensor> {
        if m == 0 || !h.is_multiple_of(m) || !w.is_multiple_of(m) {
            return Err(invalid(
                "from_patches",
                format!("{h}×{w} is not divisible by patch size {m}"),
            ));
        }
        let expect = [(h / m) * (w / m), m * m * c];
        if self.shape() != expect {
            return Err(shape_err("from_patches", self.shape(), &expect));
        }
        let idx = patch_index(c, h, w, m);
        let mut out = vec![0.0; self.numel()];
        for (v, &i) in self.data().iter().zip(&idx) {
            out[i] = *v;
        }
        Ok(Tensor::from_op(vec![1, c, h, w], out, vec![self.clone()], move || {
            Box::new(move |g, _| vec![Some(idx.iter().map(|&i| g[i]).collect())])
        }))
    }

    /// `L×C` sequence to a `1×C×gh×gw` grid (row-major positions).
    pub fn seq_to_grid(&self, gh: usize, gw: usize) -> Result<Tensor> {
        let c = match self.shape() {
            &[l, c] if l == gh * gw => c,
            s => return Err(shape_err("seq_to_grid", s, &[gh * gw, 0])),
        };
        self.transpose()?.reshape(vec![1, c, gh, gw])
    }

    /// `1×C×H×W` grid to an `(H·W)×C` sequence.
    pub fn grid_to_seq(&self) -> Result<Tensor> {
        let [b, c, h, w] = dims4(self, "grid_to_seq")?;
        if b != 1 {
            return Err(invalid("grid_to_seq", format!("batch size must be 1, got {b}")));
        }
        self.reshape(vec![c, h * w])?.transpose()
    }
}

/// Source offset in the CHW image for every element of the patch matrix.
fn patch_index(c: usize, h: usize, w: usize, m: usize) -> Vec<usize> {
    let (gh, gw) = (h / m, w / m);
    let mut idx = Vec::with_capacity(c * h * w);
    for py in 0..gh {
        for px in 0..gw {
            for dy in 0..m {
                for dx in 0..m {
                    for ch in 0..c {
                        idx.push((ch * h + py * m + dy) * w + px * m + dx);
                    }
                }
            }
        }
    }
    idx
}
