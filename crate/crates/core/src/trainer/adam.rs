use std::collections::BTreeMap;

use crate::error::{PuffError, Result};
use crate::params::Parameters;
use crate::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Moment buffers keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub m: BTreeMap<String, Vec<f32>>,
    pub v: BTreeMap<String, Vec<f32>>,
    pub t: u64,
}

/// One bias-corrected Adam update of every trainable parameter.
///
/// Updated parameters are fresh leaves, so their gradients start empty.
/// Frozen (non-trainable) parameters are skipped and keep their moments.
pub fn adam_step<P: Parameters + ?Sized>(params: &mut P, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(crate::error::invalid("adam_step", format!("bad learning rate {lr}")));
    }
    // Check every gradient before touching anything.
    let mut missing = None;
    params.visit_params("", &mut |name, t| {
        if t.requires_grad() && t.grad().is_none() && missing.is_none() {
            missing = Some(name.to_string());
        }
    });
    if let Some(name) = missing {
        return Err(PuffError::MissingGrad(name));
    }

    state.t += 1;
    let step = state.t as i32;
    let c1 = 1.0 - BETA1.powi(step);
    let c2 = 1.0 - BETA2.powi(step);
    params.visit_params_mut("", &mut |name, t| {
        if !t.requires_grad() {
            return;
        }
        let g = t.grad().expect("checked above");
        let n = g.len();
        let m = state.m.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
        let v = state.v.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
        let mut data = t.to_vec();
        for i in 0..n {
            let gi = f64::from(g[i]);
            let mi = BETA1 * f64::from(m[i]) + (1.0 - BETA1) * gi;
            let vi = BETA2 * f64::from(v[i]) + (1.0 - BETA2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let update = lr * (mi / c1) / ((vi / c2).sqrt() + EPS);
            data[i] = (f64::from(data[i]) - update) as f32;
        }
        *t = Tensor::param(t.shape().to_vec(), data);
    });
    Ok(())
}
