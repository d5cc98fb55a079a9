//! Central-difference gradient checking.

use crate::error::{invalid, Result};
use crate::params::Parameters;
use crate::rng::Rng;
use crate::tensor::{no_grad, Tensor};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradSample {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub samples: Vec<GradSample>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.samples.iter().map(|s| s.rel_err).fold(0.0, f64::max)
    }

    /// Max error with a larger denominator floor, for objectives whose
    /// rounding noise is large next to their smallest gradients.
    pub fn max_err_with_floor(&self, floor: f64) -> f64 {
        self.samples
            .iter()
            .map(|s| (s.analytic - s.numeric).abs() / s.analytic.abs().max(s.numeric.abs()).max(floor))
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradSample> {
        self.samples
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares backprop gradients of `f` against `(f(θ+h) − f(θ−h)) / 2h` at
/// `n_samples` coordinates. Each sample picks a parameter tensor uniformly,
/// then a coordinate within it uniformly.
pub fn grad_check<P: Parameters>(
    model: &mut P,
    f: impl FnMut(&P) -> Result<Tensor>,
    h: f32,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let f = std::cell::RefCell::new(f);
    grad_check_with(
        model,
        |m| (f.borrow_mut())(m),
        |m| Ok(f64::from((f.borrow_mut())(m)?.item())),
        h,
        n_samples,
        rng,
    )
}

/// [`grad_check`] with a separate evaluator for the perturbed losses, so a
/// caller can recombine an `f32` graph's pieces in `f64` and shrink the
/// rounding noise of the finite differences.
pub fn grad_check_with<P: Parameters>(
    model: &mut P,
    mut f: impl FnMut(&P) -> Result<Tensor>,
    mut eval: impl FnMut(&P) -> Result<f64>,
    h: f32,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    if h <= 0.0 {
        return Err(invalid("grad_check", "h must be positive"));
    }
    model.visit_params_mut("", &mut |_, t| t.zero_grad());
    let loss = f(model)?;
    loss.backward()?;

    let params = model.named_params();
    let trainable: Vec<usize> = (0..params.len())
        .filter(|&i| params[i].1.requires_grad())
        .collect();
    if trainable.is_empty() {
        return Err(invalid("grad_check", "no trainable parameters"));
    }

    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let pi = trainable[rng.below(trainable.len())];
        let (name, original) = &params[pi];
        let idx = rng.below(original.numel());
        let analytic = original.grad().map_or(0.0, |g| f64::from(g[idx]));

        let mut eval_at = |delta: f32| -> Result<f64> {
            let mut data = original.to_vec();
            data[idx] += delta;
            let perturbed = Tensor::param(original.shape().to_vec(), data);
            set_param(model, name, perturbed);
            no_grad(|| eval(model))
        };
        let plus = eval_at(h)?;
        let minus = eval_at(-h)?;
        set_param(model, name, original.clone());

        let numeric = (plus - minus) / (2.0 * f64::from(h));
        samples.push(GradSample {
            param: name.clone(),
            index: idx,
            analytic,
            numeric,
            rel_err: rel_err(analytic, numeric),
        });
    }
    Ok(GradCheckReport { samples })
}

fn set_param<P: Parameters>(model: &mut P, name: &str, value: Tensor) {
    model.visit_params_mut("", &mut |n, t| {
        if n == name {
            *t = value.clone();
        }
    });
}

/// [`grad_check`] over a plain list of leaves; returns the max relative error.
pub fn check_tensors(
    params: &[Tensor],
    mut f: impl FnMut(&[Tensor]) -> Result<Tensor>,
    h: f32,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let mut list: Vec<Tensor> = params.to_vec();
    let report = grad_check(&mut list, |p: &Vec<Tensor>| f(p), h, n_samples, rng)?;
    Ok(report.max_rel_err())
}

/// Checks `⟨g(θ), probe⟩` with the perturbed inner products summed in `f64`.
pub fn check_probe<P: Parameters>(
    model: &mut P,
    mut g: impl FnMut(&P) -> Result<Tensor>,
    probe: &Tensor,
    h: f32,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let g = std::cell::RefCell::new(&mut g);
    grad_check_with(
        model,
        |m| (g.borrow_mut())(m)?.mul(probe)?.sum(),
        |m| Ok(dot_f64(&(g.borrow_mut())(m)?, probe)),
        h,
        n_samples,
        rng,
    )
}

/// [`check_probe`] at each step in `hs` over the same coordinates, keeping
/// each coordinate's best agreement. A wrong gradient disagrees at every
/// step; a relu kink crossed at a large step or rounding at a small one
/// does not.
pub fn check_probe_steps<P: Parameters>(
    model: &mut P,
    mut g: impl FnMut(&P) -> Result<Tensor>,
    probe: &Tensor,
    hs: &[f32],
    n_samples: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let start = rng.clone();
    let mut best: Option<GradCheckReport> = None;
    for &h in hs {
        *rng = start.clone();
        let report = check_probe(model, &mut g, probe, h, n_samples, rng)?;
        best = Some(match best {
            None => report,
            Some(mut b) => {
                for (old, new) in b.samples.iter_mut().zip(report.samples) {
                    if new.rel_err < old.rel_err {
                        *old = new;
                    }
                }
                b
            }
        });
    }
    best.ok_or_else(|| invalid("grad_check", "no step sizes given"))
}

pub fn dot_f64(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}
