//! Empirical distributions from measurement counts.

use crate::error::{Error, Result};
use crate::quantum::Observable;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    n_qubits: usize,
    counts: Vec<u64>,
    n_shot: u64,
}

impl EmpiricalDistribution {
    pub fn from_counts(n_qubits: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != 1 << n_qubits {
            return Err(Error::shape(
                "empirical",
                format!("{} counts for {} qubits", counts.len(), n_qubits),
            ));
        }
        let n_shot: u64 = counts.iter().sum();
        if n_shot == 0 {
            return Err(Error::invalid("empirical", "zero total count".to_string()));
        }
        Ok(EmpiricalDistribution { n_qubits, counts, n_shot })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_shot(&self) -> u64 {
        self.n_shot
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// p-hat_i = count_i / n_shot.
    pub fn probabilities(&self) -> Vec<f64> {
        let inv = 1.0 / self.n_shot as f64;
        self.counts.iter().map(|&c| c as f64 * inv).collect()
    }

    /// Same diagonal-observable reduction as the exact path, applied to the
    /// empirical probabilities.
    pub fn expectation(&self, obs: &Observable) -> Result<f64> {
        obs.expectation_from_probs(&self.probabilities(), self.n_qubits)
    }
}
