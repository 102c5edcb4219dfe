//! Stochastic Pauli trajectory noise.
//!
//! One trajectory = one pass over the circuit where, after each single-qubit
//! gate, a uniformly random Pauli lands on its target with probability p1,
//! and after each CNOT a uniform non-identity two-qubit Pauli lands on
//! (control, target) with probability p2. Readout flips are a classical
//! channel applied at sampling time (see `sample_with_readout`).

use crate::error::{Error, Result};
use crate::quantum::{Circuit, Gate, Statevector};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePreset {
    pub name: String,
    pub p1: f64,
    pub p2: f64,
    pub p_ro: f64,
}

impl NoisePreset {
    pub fn ideal() -> Self {
        NoisePreset { name: "ideal".to_string(), p1: 0.0, p2: 0.0, p_ro: 0.0 }
    }

    pub fn noisy_a() -> Self {
        NoisePreset { name: "noisy-a".to_string(), p1: 0.001, p2: 0.01, p_ro: 0.02 }
    }

    pub fn noisy_b() -> Self {
        NoisePreset { name: "noisy-b".to_string(), p1: 0.002, p2: 0.02, p_ro: 0.03 }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "ideal" => Some(Self::ideal()),
            "noisy-a" => Some(Self::noisy_a()),
            "noisy-b" => Some(Self::noisy_b()),
            _ => None,
        }
    }

    /// Gate-insertion probabilities live in [0,1); the readout flip may be 1
    /// (a deterministic flip channel is well-defined).
    pub fn validate(&self) -> Result<()> {
        for (label, p) in [("p1", self.p1), ("p2", self.p2)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::invalid("noise_preset", format!("{label} = {p} outside [0, 1)")));
            }
        }
        if !(0.0..=1.0).contains(&self.p_ro) {
            return Err(Error::invalid("noise_preset", format!("p_ro = {} outside [0, 1]", self.p_ro)));
        }
        Ok(())
    }

    pub fn has_gate_noise(&self) -> bool {
        self.p1 > 0.0 || self.p2 > 0.0
    }

    pub fn is_ideal(&self) -> bool {
        self.p1 == 0.0 && self.p2 == 0.0 && self.p_ro == 0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrajectoryStats {
    pub insertions_1q: usize,
    pub insertions_2q: usize,
}

fn apply_pauli(state: &mut Statevector, which: usize, qubit: usize) -> Result<()> {
    match which {
        0 => state.apply_pauli_x(qubit),
        1 => state.apply_pauli_y(qubit),
        _ => state.apply_pauli_z(qubit),
    }
}

/// One seeded noisy trajectory of the circuit.
pub fn trajectory_with_stats(
    circuit: &Circuit,
    theta: &[f64],
    preset: &NoisePreset,
    seed: u64,
) -> Result<(Statevector, TrajectoryStats)> {
    preset.validate()?;
    if theta.len() != circuit.n_slots() {
        return Err(Error::ParamLength { got: theta.len(), expected: circuit.n_slots() });
    }
    let mut rng = rng::from_seed(seed);
    let mut state = Statevector::zero_state(circuit.n_qubits())?;
    let mut stats = TrajectoryStats::default();
    for g in circuit.gates() {
        match *g {
            Gate::Rx { target, slot } => state.apply_rx(target, theta[slot])?,
            Gate::Ry { target, slot } => state.apply_ry(target, theta[slot])?,
            Gate::Rz { target, slot } => state.apply_rz(target, theta[slot])?,
            Gate::Cnot { control, target } => {
                state.apply_cnot(control, target)?;
                if rng.random::<f64>() < preset.p2 {
                    // Uniform over the 15 non-identity two-qubit Paulis:
                    // index + 1 in base 4 gives (control, target) factors.
                    let k = rng.random_range(0..15) + 1;
                    let (pc, pt) = (k / 4, k % 4);
                    if pc > 0 {
                        apply_pauli(&mut state, pc - 1, control)?;
                    }
                    if pt > 0 {
                        apply_pauli(&mut state, pt - 1, target)?;
                    }
                    stats.insertions_2q += 1;
                }
                continue;
            }
        }
        // Single-qubit rotation path.
        if rng.random::<f64>() < preset.p1 {
            let target = match *g {
                Gate::Rx { target, .. } | Gate::Ry { target, .. } | Gate::Rz { target, .. } => target,
                Gate::Cnot { .. } => unreachable!(),
            };
            apply_pauli(&mut state, rng.random_range(0..3), target)?;
            stats.insertions_1q += 1;
        }
    }
    Ok((state, stats))
}

pub fn simulate_trajectory(
    circuit: &Circuit,
    theta: &[f64],
    preset: &NoisePreset,
    seed: u64,
) -> Result<Statevector> {
    Ok(trajectory_with_stats(circuit, theta, preset, seed)?.0)
}
