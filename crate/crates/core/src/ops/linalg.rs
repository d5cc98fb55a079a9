use super::gemm::{gemm, matmul_raw, View};
use crate::error::{invalid, shape_err, Result};
use crate::mac;
use crate::tensor::Tensor;

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(invalid(op, format!("expected a 2-d tensor, got {s:?}"))),
    }
}

impl Tensor {
    /// `[M×K] · [K×N]`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = dims2(self, "matmul")?;
        let (k2, n) = dims2(rhs, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", self.shape(), rhs.shape()));
        }
        mac::record((m * k * n) as u64);
        let out = matmul_raw(self.data(), rhs.data(), m, k, n);
        let (a, b) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone(), rhs.clone()],
            move || {
                Box::new(move |g, needs| {
                    let da = needs[0].then(|| {
                        let mut d = vec![0.0; m * k];
                        gemm(View::new(g, m, n), View::new(b.data(), k, n).t(), 0.0, &mut d);
                        d
                    });
                    let db = needs[1].then(|| {
                        let mut d = vec![0.0; k * n];
                        gemm(View::new(a.data(), m, k).t(), View::new(g, m, n), 0.0, &mut d);
                        d
                    });
                    vec![da, db]
                })
            },
        ))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = dims2(self, "transpose")?;
        let out = transpose_raw(self.data(), r, c);
        Ok(Tensor::from_op(vec![c, r], out, vec![self.clone()], move || {
            Box::new(move |g, _| vec![Some(transpose_raw(g, c, r))])
        }))
    }

    /// `x[R×N] + b[N]` added to every row.
    pub fn add_row_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let (r, n) = dims2(self, "add_row_bias")?;
        if bias.numel() != n {
            return Err(shape_err("add_row_bias", self.shape(), bias.shape()));
        }
        let mut out = self.to_vec();
        for row in out.chunks_mut(n) {
            row.iter_mut().zip(bias.data()).for_each(|(o, b)| *o += b);
        }
        let bshape = bias.shape().to_vec();
        Ok(Tensor::from_op(
            vec![r, n],
            out,
            vec![self.clone(), bias.clone()],
            move || {
                Box::new(move |g, needs| {
                    let db = needs[1].then(|| {
                        let mut d = vec![0.0; n];
                        for row in g.chunks(n) {
                            d.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                        }
                        debug_assert_eq!(d.len(), bshape.iter().product::<usize>());
                        d
                    });
                    vec![Some(g.to_vec()), db]
                })
            },
        ))
    }

    /// `x · w + b` for `x[R×I]`, `w[I×O]`, `b[O]`.
    pub fn linear(&self, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
        let y = self.matmul(w)?;
        match b {
            Some(b) => y.add_row_bias(b),
            None => Ok(y),
        }
    }

    /// Columns `[start, start+len)` of a 2-d tensor.
    pub fn narrow_cols(&self, start: usize, len: usize) -> Result<Tensor> {
        let (r, c) = dims2(self, "narrow_cols")?;
        if start + len > c || len == 0 {
            return Err(invalid(
                "narrow_cols",
                format!("range {start}..{} outside {c} columns", start + len),
            ));
        }
        let mut out = Vec::with_capacity(r * len);
        for row in self.data().chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        Ok(Tensor::from_op(vec![r, len], out, vec![self.clone()], move || {
            Box::new(move |g, _| {
                let mut d = vec![0.0; r * c];
                for (drow, grow) in d.chunks_mut(c).zip(g.chunks(len)) {
                    drow[start..start + len].copy_from_slice(grow);
                }
                vec![Some(d)]
            })
        }))
    }

    /// Concatenates 2-d tensors with equal row counts side by side.
    pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| invalid("concat_cols", "no inputs"))?;
        let (r, _) = dims2(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pr, pc) = dims2(p, "concat_cols")?;
            if pr != r {
                return Err(shape_err("concat_cols", first.shape(), p.shape()));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&p.data()[i * w..(i + 1) * w]);
            }
        }
        Ok(Tensor::from_op(vec![r, total], out, parts.to_vec(), move || {
            Box::new(move |g, needs| {
                let mut offset = 0;
                let mut grads = Vec::with_capacity(widths.len());
                for (&w, &need) in widths.iter().zip(needs) {
                    grads.push(need.then(|| {
                        let mut d = Vec::with_capacity(r * w);
                        for row in g.chunks(total) {
                            d.extend_from_slice(&row[offset..offset + w]);
                        }
                        d
                    }));
                    offset += w;
                }
                grads
            })
        }))
    }

    /// Stacks 2-d tensors with equal widths on top of each other.
    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| invalid("concat_rows", "no inputs"))?;
        let (_, c) = dims2(first, "concat_rows")?;
        let mut sizes = Vec::with_capacity(parts.len());
        for p in parts {
            let (pr, pc) = dims2(p, "concat_rows")?;
            if pc != c {
                return Err(shape_err("concat_rows", first.shape(), p.shape()));
            }
            sizes.push(pr * pc);
        }
        let rows: usize = sizes.iter().sum::<usize>() / c;
        let out: Vec<f32> = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
        Ok(Tensor::from_op(vec![rows, c], out, parts.to_vec(), move || {
            Box::new(move |g, needs| {
                let mut offset = 0;
                sizes
                    .iter()
                    .zip(needs)
                    .map(|(&n, &need)| {
                        let d = need.then(|| g[offset..offset + n].to_vec());
                        offset += n;
                        d
                    })
                    .collect()
            })
        }))
    }
}

pub(crate) fn transpose_raw(x: &[f32], r: usize, c: usize) -> Vec<f32> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = x[i * c + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_tensors;
    use crate::rng::Rng;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn naive(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut c = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += f64::from(a[i * k + p]) * f64::from(b[p * n + j]);
                }
            }
        }
        c.into_iter().map(|v| v as f32).collect()
    }

    #[test]
    fn identity_times_x() {
        let i2 = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let x = t(&[2, 2], &[0.3, -1.2, 4.0, 2.5]);
        assert_eq!(i2.matmul(&x).unwrap().data(), x.data());
    }

    #[test]
    fn hand_arithmetic() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 1], &[1.0, 1.0]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[3.0, 7.0]);
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = Rng::new(11);
        let a = rng.uniform_vec(35, -1.0, 1.0);
        let b = rng.uniform_vec(21, -1.0, 1.0);
        let got = t(&[5, 7], &a).matmul(&t(&[7, 3], &b)).unwrap();
        for (x, y) in got.data().iter().zip(naive(&a, &b, 5, 7, 3)) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let err = t(&[2, 3], &[0.0; 6]).matmul(&t(&[2, 3], &[0.0; 6])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn mac_counter_adds_mkn() {
        let a = Tensor::zeros(vec![4, 6]);
        let b = Tensor::zeros(vec![6, 5]);
        let (_, c) = mac::count(|| a.matmul(&b).unwrap());
        assert_eq!(c.total(), 4 * 6 * 5);
    }

    #[test]
    fn matmul_gradients() {
        let mut rng = Rng::new(2);
        let a = Tensor::param(vec![3, 4], rng.uniform_vec(12, -1.0, 1.0));
        let b = Tensor::param(vec![4, 2], rng.uniform_vec(8, -1.0, 1.0));
        let w = Tensor::new(vec![3, 2], rng.uniform_vec(6, -1.0, 1.0)).unwrap();
        let err = check_tensors(
            &[a, b],
            |p| p[0].matmul(&p[1])?.mul(&w)?.sum(),
            1e-2,
            20,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn concat_and_narrow_roundtrip_gradients() {
        let mut rng = Rng::new(5);
        let a = Tensor::param(vec![3, 2], rng.uniform_vec(6, -1.0, 1.0));
        let b = Tensor::param(vec![3, 4], rng.uniform_vec(12, -1.0, 1.0));
        let w = Tensor::new(vec![3, 3], rng.uniform_vec(9, -1.0, 1.0)).unwrap();
        let err = check_tensors(
            &[a, b],
            |p| {
                let cat = Tensor::concat_cols(&[p[0].clone(), p[1].clone()])?;
                cat.narrow_cols(1, 3)?.mul(&w)?.sum()
            },
            1e-2,
            18,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn concat_rows_stacks() {
        let a = t(&[1, 2], &[1.0, 2.0]);
        let b = t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]);
        let c = Tensor::concat_rows(&[a, b]).unwrap();
        assert_eq!(c.shape(), &[3, 2]);
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn transpose_gradient() {
        let mut rng = Rng::new(9);
        let a = Tensor::param(vec![2, 3], rng.uniform_vec(6, -1.0, 1.0));
        let w = Tensor::new(vec![3, 2], rng.uniform_vec(6, -1.0, 1.0)).unwrap();
        let err = check_tensors(&[a], |p| p[0].transpose()?.mul(&w)?.sum(), 1e-2, 6, &mut rng)
            .unwrap();
        assert!(err < 1e-2);
    }
}
