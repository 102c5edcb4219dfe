//! Parameter-shift gradients.
//!
//! For rotation generators, d f / d theta_j = (f(theta + pi/2 e_j) -
//! f(theta - pi/2 e_j)) / 2. The readout is supplied as a closure so the
//! same rule serves exact expectations and finite-shot estimates; the
//! closure receives which slot/sign is being evaluated so sampled readouts
//! can derive fresh, reproducible seeds per evaluation.

use super::circuit::Circuit;
use super::observable::{exact_expectation, Observable};
use crate::error::{Error, Result};
use std::f64::consts::FRAC_PI_2;

/// Identifies one shifted evaluation within a gradient computation.
#[derive(Debug, Clone, Copy)]
pub struct ShiftEval {
    pub slot: usize,
    /// +1 for the positive shift, -1 for the negative.
    pub sign: i8,
}

/// Gradient over the listed slots; other entries stay zero.
pub fn parameter_shift_grad_slots<F>(theta: &[f64], slots: &[usize], mut readout: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], ShiftEval) -> Result<f64>,
{
    let mut grad = vec![0.0; theta.len()];
    let mut shifted = theta.to_vec();
    for &slot in slots {
        if slot >= theta.len() {
            return Err(Error::invalid("parameter_shift", format!("slot {slot} of {}", theta.len())));
        }
        shifted[slot] = theta[slot] + FRAC_PI_2;
        let plus = readout(&shifted, ShiftEval { slot, sign: 1 })?;
        shifted[slot] = theta[slot] - FRAC_PI_2;
        let minus = readout(&shifted, ShiftEval { slot, sign: -1 })?;
        shifted[slot] = theta[slot];
        grad[slot] = (plus - minus) / 2.0;
    }
    Ok(grad)
}

/// Gradient over every slot.
pub fn parameter_shift_grad<F>(theta: &[f64], readout: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], ShiftEval) -> Result<f64>,
{
    let slots: Vec<usize> = (0..theta.len()).collect();
    parameter_shift_grad_slots(theta, &slots, readout)
}

/// Exact-expectation gradient of an observable readout.
pub fn exact_expectation_grad(circuit: &Circuit, theta: &[f64], obs: &Observable) -> Result<Vec<f64>> {
    parameter_shift_grad(theta, |t, _| exact_expectation(&circuit.simulate(t)?, obs))
}
