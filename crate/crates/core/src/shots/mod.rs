//! Finite-shot sampling, stochastic Pauli noise, and shot-budget analysis.

mod budget;
mod empirical;
mod hoeffding;
mod noise;
mod sample;

pub use budget::ShotBudget;
pub use empirical::EmpiricalDistribution;
pub use hoeffding::{hoeffding_epsilon, hoeffding_tail};
pub use noise::{simulate_trajectory, trajectory_with_stats, NoisePreset, TrajectoryStats};
pub use sample::{sample_probs, sample_shots, sample_with_readout};

use crate::error::Result;
use crate::quantum::Circuit;
use crate::rng::derive_seed;

/// Full noisy pipeline: one gate-noise trajectory, then finite-shot sampling
/// with readout flips. (seed, circuit, theta, preset) fully determines the
/// result; trajectory and readout streams are derived independently.
pub fn sample_circuit(
    circuit: &Circuit,
    theta: &[f64],
    preset: &NoisePreset,
    budget: &ShotBudget,
    seed: u64,
) -> Result<EmpiricalDistribution> {
    preset.validate()?;
    let state = if preset.has_gate_noise() {
        simulate_trajectory(circuit, theta, preset, derive_seed(seed, "trajectory", &[]))?
    } else {
        circuit.simulate(theta)?
    };
    sample_with_readout(&state.probabilities(), budget, preset.p_ro, derive_seed(seed, "readout", &[]))
}

/// Noisy or exact probabilities, depending on the preset: gate noise uses a
/// seeded trajectory, the ideal preset is fully deterministic.
pub fn circuit_probabilities(
    circuit: &Circuit,
    theta: &[f64],
    preset: &NoisePreset,
    seed: u64,
) -> Result<Vec<f64>> {
    preset.validate()?;
    if preset.has_gate_noise() {
        Ok(simulate_trajectory(circuit, theta, preset, derive_seed(seed, "trajectory", &[]))?.probabilities())
    } else {
        circuit.exact_probabilities(theta)
    }
}
