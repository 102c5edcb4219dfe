//! Shot-budget error bounds from Hoeffding's inequality.

use crate::error::{Error, Result};

/// Worst-case uniform estimation error over all 2^n basis probabilities at
/// confidence 1 - delta: sqrt(2^n * ln(2/delta) / (2 * n_shot)).
pub fn hoeffding_epsilon(n_qubits: usize, n_shot: u64, delta: f64) -> Result<f64> {
    if n_qubits == 0 {
        return Err(Error::QubitCount { n: 0 });
    }
    if n_shot == 0 {
        return Err(Error::invalid("hoeffding_epsilon", "zero shots".to_string()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("hoeffding_epsilon", format!("delta {delta} outside (0,1)")));
    }
    let hss = (1u64 << n_qubits) as f64;
    Ok((hss * (2.0 / delta).ln() / (2.0 * n_shot as f64)).sqrt())
}

/// Two-sided tail bound on one estimated probability:
/// min(1, 2 exp(-2 eps^2 n')).
pub fn hoeffding_tail(eps: f64, n_shot_per_state: u64) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid("hoeffding_tail", format!("epsilon {eps} must be positive")));
    }
    Ok((2.0 * (-2.0 * eps * eps * n_shot_per_state as f64).exp()).min(1.0))
}
