//! Gradient verification helpers: reverse-mode results vs central finite
//! differences, with a scale-aware relative error.

use crate::autodiff::{Tape, Tensor, TensorId};
use crate::error::Result;

/// |a - b| / max(|a|, |b|, 1).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub type ScalarFn<'a> = dyn FnMut(&mut Tape, &[TensorId]) -> Result<TensorId> + 'a;

fn eval(inputs: &[Tensor], f: &mut ScalarFn) -> Result<f64> {
    let mut tape = Tape::new();
    let mut ids = Vec::with_capacity(inputs.len());
    for t in inputs {
        ids.push(tape.leaf(t.clone(), true)?);
    }
    let out = f(&mut tape, &ids)?;
    tape.value(out).item()
}

/// Reverse-mode gradients of a scalar-valued builder w.r.t. every input.
pub fn autodiff_grads(inputs: &[Tensor], f: &mut ScalarFn) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let mut ids = Vec::with_capacity(inputs.len());
    for t in inputs {
        ids.push(tape.leaf(t.clone(), true)?);
    }
    let out = f(&mut tape, &ids)?;
    tape.backward(out)?;
    Ok(ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            tape.grad(id)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; inputs[i].numel()])
        })
        .collect())
}

/// Central finite differences with step `h`.
pub fn finite_diff_grads(inputs: &[Tensor], h: f64, f: &mut ScalarFn) -> Result<Vec<Vec<f64>>> {
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut gi = vec![0.0; inputs[i].numel()];
        for j in 0..inputs[i].numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            gi[j] = (eval(&plus, f)? - eval(&minus, f)?) / (2.0 * h);
        }
        grads.push(gi);
    }
    Ok(grads)
}

/// Largest relative error between reverse-mode and finite-difference
/// gradients across all inputs and coordinates.
pub fn max_grad_discrepancy(inputs: &[Tensor], h: f64, f: &mut ScalarFn) -> Result<f64> {
    let ad = autodiff_grads(inputs, f)?;
    let fd = finite_diff_grads(inputs, h, f)?;
    let mut worst: f64 = 0.0;
    for (ga, gf) in ad.iter().zip(&fd) {
        for (&a, &b) in ga.iter().zip(gf) {
            worst = worst.max(rel_err(a, b));
        }
    }
    Ok(worst)
}
