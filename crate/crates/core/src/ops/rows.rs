//! Ops that act independently on each row of the trailing axis.

use crate::error::{invalid, shape_err, PuffError, Result};
use crate::tensor::Tensor;

fn last_dim(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    let n = *t
        .shape()
        .last()
        .ok_or_else(|| invalid(op, "expected at least one axis"))?;
    if n == 0 {
        return Err(invalid(op, "empty trailing axis"));
    }
    Ok((t.numel() / n, n))
}

pub const LAYER_NORM_EPS: f32 = 1e-5;

impl Tensor {
    /// Softmax over the last axis, stabilised by row-max subtraction.
    pub fn softmax(&self) -> Result<Tensor> {
        let (_, n) = last_dim(self, "softmax")?;
        if !self.data().iter().all(|v| v.is_finite()) {
            return Err(PuffError::NonFinite("softmax input".into()));
        }
        let mut out = self.to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut total = 0.0f64;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += f64::from(*v);
            }
            let inv = (1.0 / total) as f32;
            row.iter_mut().for_each(|v| *v *= inv);
        }
        let y = out.clone();
        Ok(Tensor::from_op(self.shape().to_vec(), out, vec![self.clone()], move || {
            Box::new(move |g, _| {
                let mut d = vec![0.0; g.len()];
                for ((drow, grow), yrow) in d.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                    let dot: f32 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for ((dv, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                        *dv = yv * (gv - dot);
                    }
                }
                vec![Some(d)]
            })
        }))
    }

    /// Per-row standardisation followed by `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f32) -> Result<Tensor> {
        let (rows, n) = last_dim(self, "layer_norm")?;
        if gain.numel() != n || bias.numel() != n {
            return Err(shape_err("layer_norm", self.shape(), gain.shape()));
        }
        if eps <= 0.0 {
            return Err(invalid("layer_norm", "eps must be positive"));
        }
        let mut xhat = vec![0.0f32; rows * n];
        let mut inv_std = vec![0.0f32; rows];
        for (r, row) in self.data().chunks(n).enumerate() {
            let mean = row.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
            let var = row
                .iter()
                .map(|&v| (f64::from(v) - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let is = 1.0 / (var + f64::from(eps)).sqrt();
            inv_std[r] = is as f32;
            for (o, &v) in xhat[r * n..(r + 1) * n].iter_mut().zip(row) {
                *o = ((f64::from(v) - mean) * is) as f32;
            }
        }
        let out: Vec<f32> = xhat
            .chunks(n)
            .flat_map(|row| {
                row.iter()
                    .zip(gain.data())
                    .zip(bias.data())
                    .map(|((x, g), b)| x * g + b)
            })
            .collect();
        let gain_c = gain.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone(), gain.clone(), bias.clone()],
            move || {
                Box::new(move |g, needs| {
                    let dx = needs[0].then(|| {
                        let mut d = vec![0.0; rows * n];
                        for r in 0..rows {
                            let gr = &g[r * n..(r + 1) * n];
                            let xr = &xhat[r * n..(r + 1) * n];
                            let dxhat: Vec<f32> =
                                gr.iter().zip(gain_c.data()).map(|(a, b)| a * b).collect();
                            let m1 = dxhat.iter().sum::<f32>() / n as f32;
                            let m2 =
                                dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f32>() / n as f32;
                            for j in 0..n {
                                d[r * n + j] = inv_std[r] * (dxhat[j] - m1 - xr[j] * m2);
                            }
                        }
                        d
                    });
                    let dgain = needs[1].then(|| {
                        let mut d = vec![0.0; n];
                        for (gr, xr) in g.chunks(n).zip(xhat.chunks(n)) {
                            for j in 0..n {
                                d[j] += gr[j] * xr[j];
                            }
                        }
                        d
                    });
                    let dbias = needs[2].then(|| {
                        let mut d = vec![0.0; n];
                        for gr in g.chunks(n) {
                            d.iter_mut().zip(gr).for_each(|(a, b)| *a += b);
                        }
                        d
                    });
                    vec![dx, dgain, dbias]
                })
            },
        ))
    }

    /// Mean of each row: `[..., N] -> [rows]`.
    pub fn row_mean(&self) -> Result<Tensor> {
        let (rows, n) = last_dim(self, "row_mean")?;
        let out: Vec<f32> = self
            .data()
            .chunks(n)
            .map(|r| (r.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64) as f32)
            .collect();
        Ok(Tensor::from_op(vec![rows], out, vec![self.clone()], move || {
            Box::new(move |g, _| {
                let d = g
                    .iter()
                    .flat_map(|&gv| std::iter::repeat_n(gv / n as f32, n))
                    .collect();
                vec![Some(d)]
            })
        }))
    }

    /// Biased (divide-by-N) variance of each row.
    pub fn row_var(&self) -> Result<Tensor> {
        let (rows, n) = last_dim(self, "row_var")?;
        let means: Vec<f64> = self
            .data()
            .chunks(n)
            .map(|r| r.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64)
            .collect();
        let out: Vec<f32> = self
            .data()
            .chunks(n)
            .zip(&means)
            .map(|(r, &m)| {
                (r.iter().map(|&v| (f64::from(v) - m).powi(2)).sum::<f64>() / n as f64) as f32
            })
            .collect();
        let x = self.clone();
        Ok(Tensor::from_op(vec![rows], out, vec![self.clone()], move || {
            Box::new(move |g, _| {
                let mut d = vec![0.0; rows * n];
                for r in 0..rows {
                    let m = means[r] as f32;
                    let k = 2.0 * g[r] / n as f32;
                    for j in 0..n {
                        d[r * n + j] = k * (x.data()[r * n + j] - m);
                    }
                }
                vec![Some(d)]
            })
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_tensors;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn uniform_row() {
        let y = Tensor::zeros(vec![1, 3]).softmax().unwrap();
        for v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let x = Tensor::full(vec![2], 1000.0);
        assert_eq!(x.softmax().unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rejects_nan() {
        let x = Tensor::new(vec![2], vec![f32::NAN, 0.0]).unwrap();
        assert!(x.softmax().is_err());
    }

    #[test]
    fn random_rows_normalised() {
        let mut rng = Rng::new(3);
        let x = Tensor::new(vec![4, 8], rng.uniform_vec(32, -5.0, 5.0)).unwrap();
        for row in x.softmax().unwrap().data().chunks(8) {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_row_normalises_to_zero() {
        let x = Tensor::full(vec![2, 5], 3.7);
        let y = x
            .layer_norm(&Tensor::full(vec![5], 1.0), &Tensor::zeros(vec![5]), LAYER_NORM_EPS)
            .unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_moments() {
        let mut rng = Rng::new(12);
        let x = Tensor::new(vec![6, 32], rng.uniform_vec(192, -3.0, 7.0)).unwrap();
        let y = x
            .layer_norm(&Tensor::full(vec![32], 1.0), &Tensor::zeros(vec![32]), LAYER_NORM_EPS)
            .unwrap();
        for row in y.data().chunks(32) {
            let m = row.iter().map(|&v| f64::from(v)).sum::<f64>() / 32.0;
            let var = row.iter().map(|&v| (f64::from(v) - m).powi(2)).sum::<f64>() / 32.0;
            assert!(m.abs() < 1e-6, "{m}");
            assert!((var - 1.0).abs() < 1e-3, "{var}");
        }
    }

    #[test]
    fn layer_norm_gradcheck() {
        let mut rng = Rng::new(21);
        let x = Tensor::param(vec![3, 6], rng.uniform_vec(18, -1.0, 1.0));
        let g = Tensor::param(vec![6], rng.uniform_vec(6, 0.5, 1.5));
        let b = Tensor::param(vec![6], rng.uniform_vec(6, -0.5, 0.5));
        let w = Tensor::new(vec![3, 6], rng.uniform_vec(18, -1.0, 1.0)).unwrap();
        let err = check_tensors(
            &[x, g, b],
            |p| p[0].layer_norm(&p[1], &p[2], LAYER_NORM_EPS)?.mul(&w)?.sum(),
            1e-2,
            30,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn softmax_gradcheck() {
        let mut rng = Rng::new(22);
        let x = Tensor::param(vec![3, 5], rng.uniform_vec(15, -2.0, 2.0));
        let w = Tensor::new(vec![3, 5], rng.uniform_vec(15, -1.0, 1.0)).unwrap();
        let err =
            check_tensors(&[x], |p| p[0].softmax()?.mul(&w)?.sum(), 1e-2, 15, &mut rng).unwrap();
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn moments_gradcheck() {
        let mut rng = Rng::new(23);
        let x = Tensor::param(vec![2, 7], rng.uniform_vec(14, -1.0, 1.0));
        let w = Tensor::new(vec![2], vec![0.7, -1.3]).unwrap();
        let err = check_tensors(
            &[x],
            |p| p[0].row_mean()?.add(&p[0].row_var()?)?.mul(&w)?.sum(),
            1e-2,
            14,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-2, "{err}");
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-50.0f32..50.0, 1..64)) {
            let n = vals.len();
            let y = Tensor::new(vec![1, n], vals).unwrap().softmax().unwrap();
            let s: f32 = y.data().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            prop_assert!(y.data().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn layer_norm_mean_is_zero(vals in proptest::collection::vec(-100.0f32..100.0, 4..64)) {
            let n = vals.len();
            let spread = vals.iter().cloned().fold(f32::MIN, f32::max)
                - vals.iter().cloned().fold(f32::MAX, f32::min);
            prop_assume!(spread > 1e-2);
            let y = Tensor::new(vec![1, n], vals).unwrap()
                .layer_norm(&Tensor::full(vec![n], 1.0), &Tensor::zeros(vec![n]), LAYER_NORM_EPS)
                .unwrap();
            let m = y.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
            prop_assert!(m.abs() < 1e-6, "mean {}", m);
        }
    }
}
