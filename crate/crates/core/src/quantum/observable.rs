//! Diagonal (computational-basis) observables.

use super::state::Statevector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// Explicit eigenvalue per basis state; entries must be +1 or -1
    /// (products of Z factors).
    ZTable(Vec<f64>),
    /// Sum of single-qubit Z expectations over a qubit subset.
    GroupedZ(Vec<usize>),
}

impl Observable {
    pub fn single_z(qubit: usize) -> Self {
        Observable::GroupedZ(vec![qubit])
    }

    pub fn grouped_z(qubits: &[usize]) -> Self {
        Observable::GroupedZ(qubits.to_vec())
    }

    pub fn z_table(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| v.abs() != 1.0) {
            return Err(Error::invalid("z_table", format!("entry {v} is not +1/-1")));
        }
        Ok(Observable::ZTable(values))
    }

    /// Parity of all qubits: Z tensor Z tensor ... tensor Z.
    pub fn full_parity(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let table = (0..dim)
            .map(|i: usize| if i.count_ones() % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        Observable::ZTable(table)
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        match self {
            Observable::ZTable(t) => {
                if t.len() != 1 << n_qubits {
                    return Err(Error::shape(
                        "observable",
                        format!("table of {} for {} qubits", t.len(), n_qubits),
                    ));
                }
                if let Some(v) = t.iter().find(|v| v.abs() != 1.0) {
                    return Err(Error::invalid("observable", format!("entry {v} is not +1/-1")));
                }
            }
            Observable::GroupedZ(qs) => {
                if let Some(&q) = qs.iter().find(|&&q| q >= n_qubits) {
                    return Err(Error::invalid("observable", format!("qubit {q} of {n_qubits}")));
                }
            }
        }
        Ok(())
    }

    /// Eigenvalue on one basis state.
    pub fn eigenvalue(&self, basis_index: usize, n_qubits: usize) -> f64 {
        match self {
            Observable::ZTable(t) => t[basis_index],
            Observable::GroupedZ(qs) => qs
                .iter()
                .map(|&q| {
                    if basis_index >> (n_qubits - 1 - q) & 1 == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .sum(),
        }
    }

    /// Expectation under any probability vector over basis states — the same
    /// reduction serves exact and empirical distributions.
    pub fn expectation_from_probs(&self, probs: &[f64], n_qubits: usize) -> Result<f64> {
        self.validate(n_qubits)?;
        if probs.len() != 1 << n_qubits {
            return Err(Error::shape(
                "expectation",
                format!("{} probabilities for {} qubits", probs.len(), n_qubits),
            ));
        }
        Ok(probs
            .iter()
            .enumerate()
            .map(|(i, p)| p * self.eigenvalue(i, n_qubits))
            .sum())
    }
}

/// Exact expectation on a statevector.
pub fn exact_expectation(state: &Statevector, obs: &Observable) -> Result<f64> {
    obs.expectation_from_probs(&state.probabilities(), state.n_qubits())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn z_on_basis_states() {
        let s = Statevector::zero_state(1).unwrap();
        assert_eq!(exact_expectation(&s, &Observable::single_z(0)).unwrap(), 1.0);
        let mut s = Statevector::zero_state(1).unwrap();
        s.apply_rx(0, PI).unwrap();
        let v = exact_expectation(&s, &Observable::single_z(0)).unwrap();
        assert!((v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn grouped_z_sums_members() {
        // |10>: Z0 = -1, Z1 = +1.
        let mut s = Statevector::zero_state(2).unwrap();
        s.apply_rx(0, PI).unwrap();
        let v = exact_expectation(&s, &Observable::grouped_z(&[0, 1])).unwrap();
        assert!(v.abs() < 1e-12);
        let v0 = exact_expectation(&s, &Observable::single_z(0)).unwrap();
        assert!((v0 + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ry_angle_sweep_matches_cosine() {
        for &angle in &[0.0, 0.3, 1.1, 2.5] {
            let mut s = Statevector::zero_state(1).unwrap();
            s.apply_ry(0, angle).unwrap();
            let v = exact_expectation(&s, &Observable::single_z(0)).unwrap();
            assert!((v - angle.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn table_validation() {
        assert!(Observable::z_table(vec![1.0, -1.0]).is_ok());
        assert!(Observable::z_table(vec![1.0, 0.5]).is_err());
        let o = Observable::ZTable(vec![1.0, -1.0]);
        assert!(o.validate(2).is_err());
        let o = Observable::grouped_z(&[3]);
        assert!(o.validate(2).is_err());
    }

    #[test]
    fn full_parity_table() {
        let o = Observable::full_parity(2);
        assert_eq!(
            o,
            Observable::ZTable(vec![1.0, -1.0, -1.0, 1.0])
        );
    }
}
