//! Shot budgets expressed as multiples of the Hilbert space size.

use crate::error::{Error, Result};
use crate::quantum::MAX_QUBITS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotBudget {
    pub n_qubits: usize,
    pub n_shot: u64,
    /// Multiplier k when the budget was given as k * 2^n.
    pub multiplier: Option<f64>,
}

impl ShotBudget {
    /// n_shot = round(k * 2^n), clamped to at least one shot.
    pub fn from_multiplier(k: f64, n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::QubitCount { n: n_qubits });
        }
        if !k.is_finite() || k <= 0.0 {
            return Err(Error::invalid("shot_budget", format!("multiplier {k} must be positive")));
        }
        let n_shot = ((k * (1u64 << n_qubits) as f64).round() as u64).max(1);
        Ok(ShotBudget { n_qubits, n_shot, multiplier: Some(k) })
    }

    pub fn exact(n_shot: u64, n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::QubitCount { n: n_qubits });
        }
        if n_shot == 0 {
            return Err(Error::invalid("shot_budget", "zero shots".to_string()));
        }
        Ok(ShotBudget { n_qubits, n_shot, multiplier: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplier_resolution() {
        assert_eq!(ShotBudget::from_multiplier(20.0, 4).unwrap().n_shot, 320);
        assert_eq!(ShotBudget::from_multiplier(10.0, 13).unwrap().n_shot, 81920);
        assert_eq!(ShotBudget::from_multiplier(1.0, 3).unwrap().n_shot, 8);
        assert_eq!(ShotBudget::from_multiplier(1e-9, 4).unwrap().n_shot, 1);
        assert!(ShotBudget::from_multiplier(0.0, 4).is_err());
        assert!(ShotBudget::from_multiplier(-1.0, 4).is_err());
        assert!(ShotBudget::from_multiplier(1.0, 17).is_err());
    }

    #[test]
    fn exact_budget() {
        assert_eq!(ShotBudget::exact(50, 4).unwrap().n_shot, 50);
        assert!(ShotBudget::exact(0, 4).is_err());
    }
}
