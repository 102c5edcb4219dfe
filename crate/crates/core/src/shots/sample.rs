//! Multinomial shot sampling with optional readout flips.

use super::budget::ShotBudget;
use super::empirical::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::quantum::Statevector;
use crate::rng;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

fn validate_probs(probs: &[f64], n_qubits: usize) -> Result<()> {
    if probs.len() != 1 << n_qubits {
        return Err(Error::shape(
            "sample",
            format!("{} probabilities for {} qubits", probs.len(), n_qubits),
        ));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < -1e-12) {
        return Err(Error::invalid("sample", "negative or non-finite probability".to_string()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("sample", format!("probabilities sum to {total}")));
    }
    Ok(())
}

/// Multinomial draw via sequential conditional binomials.
pub fn sample_probs(probs: &[f64], budget: &ShotBudget, seed: u64) -> Result<EmpiricalDistribution> {
    validate_probs(probs, budget.n_qubits)?;
    let mut rng = rng::from_seed(seed);
    let dim = probs.len();
    let mut counts = vec![0u64; dim];
    let mut remaining = budget.n_shot;
    let mut rem_p = 1.0f64;
    for i in 0..dim - 1 {
        if remaining == 0 {
            break;
        }
        let q = if rem_p <= 0.0 { 1.0 } else { (probs[i].max(0.0) / rem_p).clamp(0.0, 1.0) };
        let c = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q)
                .map_err(|e| Error::Internal(format!("binomial: {e}")))?
                .sample(&mut rng)
        };
        counts[i] = c;
        remaining -= c;
        rem_p = (rem_p - probs[i].max(0.0)).max(0.0);
    }
    counts[dim - 1] = remaining;
    EmpiricalDistribution::from_counts(budget.n_qubits, counts)
}

/// Sample measurement outcomes from a statevector.
pub fn sample_shots(state: &Statevector, budget: &ShotBudget, seed: u64) -> Result<EmpiricalDistribution> {
    if state.n_qubits() != budget.n_qubits {
        return Err(Error::shape(
            "sample",
            format!("{}-qubit state, {}-qubit budget", state.n_qubits(), budget.n_qubits),
        ));
    }
    sample_probs(&state.probabilities(), budget, seed)
}

/// Shot sampling with a classical readout channel: after each shot's outcome
/// is drawn, every qubit's bit flips independently with probability p_ro.
/// p_ro = 0 routes to the plain sampler and is bit-identical to it.
pub fn sample_with_readout(
    probs: &[f64],
    budget: &ShotBudget,
    p_ro: f64,
    seed: u64,
) -> Result<EmpiricalDistribution> {
    if !(0.0..=1.0).contains(&p_ro) {
        return Err(Error::invalid("sample", format!("readout probability {p_ro}")));
    }
    if p_ro == 0.0 {
        return sample_probs(probs, budget, seed);
    }
    validate_probs(probs, budget.n_qubits)?;
    let n = budget.n_qubits;
    let mut rng = rng::from_seed(seed);
    let mut cdf = probs.to_vec();
    for i in 1..cdf.len() {
        cdf[i] += cdf[i - 1];
    }
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..budget.n_shot {
        let u: f64 = rng.random();
        let mut idx = cdf.partition_point(|&c| c <= u).min(probs.len() - 1);
        for q in 0..n {
            if rng.random::<f64>() < p_ro {
                idx ^= 1 << (n - 1 - q);
            }
        }
        counts[idx] += 1;
    }
    EmpiricalDistribution::from_counts(n, counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bell_probs() -> Vec<f64> {
        vec![0.5, 0.0, 0.0, 0.5]
    }

    #[test]
    fn degenerate_distribution_is_exact() {
        let b = ShotBudget::exact(1000, 2).unwrap();
        let d = sample_probs(&[1.0, 0.0, 0.0, 0.0], &b, 7).unwrap();
        assert_eq!(d.counts(), &[1000, 0, 0, 0]);
    }

    #[test]
    fn single_shot_yields_single_count() {
        let b = ShotBudget::exact(1, 2).unwrap();
        for seed in 0..20 {
            let d = sample_probs(&bell_probs(), &b, seed).unwrap();
            assert_eq!(d.counts().iter().sum::<u64>(), 1);
            assert_eq!(d.counts().iter().filter(|&&c| c == 1).count(), 1);
        }
    }

    #[test]
    fn bell_concentration_at_large_budget() {
        let b = ShotBudget::exact(1_000_000, 2).unwrap();
        let d = sample_probs(&bell_probs(), &b, 42).unwrap();
        let p0 = d.probabilities()[0];
        // Seeded draw observed at 0.499948; binomial concentration keeps any
        // seed within 0.002 with overwhelming probability.
        assert!((p0 - 0.5).abs() <= 0.002, "p0 = {p0}");
        assert_eq!(d.counts()[1], 0);
        assert_eq!(d.counts()[2], 0);
    }

    #[test]
    fn deterministic_per_seed() {
        let b = ShotBudget::exact(500, 2).unwrap();
        let a = sample_probs(&bell_probs(), &b, 9).unwrap();
        let c = sample_probs(&bell_probs(), &b, 9).unwrap();
        assert_eq!(a, c);
        let d = sample_probs(&bell_probs(), &b, 10).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn counts_always_sum_to_budget() {
        let probs = vec![0.1, 0.25, 0.05, 0.6];
        for shots in [1u64, 7, 100, 12345] {
            let b = ShotBudget::exact(shots, 2).unwrap();
            let d = sample_probs(&probs, &b, shots).unwrap();
            assert_eq!(d.counts().iter().sum::<u64>(), shots);
        }
    }

    #[test]
    fn zero_readout_routes_to_plain_sampler() {
        let b = ShotBudget::exact(777, 2).unwrap();
        let plain = sample_probs(&bell_probs(), &b, 5).unwrap();
        let routed = sample_with_readout(&bell_probs(), &b, 0.0, 5).unwrap();
        assert_eq!(plain, routed);
    }

    #[test]
    fn certain_readout_flips_every_bit() {
        let b = ShotBudget::exact(200, 1).unwrap();
        let d = sample_with_readout(&[1.0, 0.0], &b, 1.0, 3).unwrap();
        assert_eq!(d.counts(), &[0, 200]);
        let b = ShotBudget::exact(100, 2).unwrap();
        let d = sample_with_readout(&[1.0, 0.0, 0.0, 0.0], &b, 1.0, 3).unwrap();
        assert_eq!(d.counts(), &[0, 0, 0, 100]);
    }

    #[test]
    fn rejects_bad_probability_vectors() {
        let b = ShotBudget::exact(10, 1).unwrap();
        assert!(sample_probs(&[0.7, 0.7], &b, 0).is_err());
        assert!(sample_probs(&[1.2, -0.2], &b, 0).is_err());
        assert!(sample_with_readout(&[0.5, 0.5], &b, 1.5, 0).is_err());
    }
}
