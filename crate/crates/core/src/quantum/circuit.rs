//! Parameterized circuits over the gate set {RX, RY, RZ, CNOT}.
//!
//! Rotation gates reference parameter slots; the builder assigns slots
//! sequentially so each slot is referenced exactly once.

use super::state::Statevector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Rx { target: usize, slot: usize },
    Ry { target: usize, slot: usize },
    Rz { target: usize, slot: usize },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn slot(&self) -> Option<usize> {
        match self {
            Gate::Rx { slot, .. } | Gate::Ry { slot, .. } | Gate::Rz { slot, .. } => Some(*slot),
            Gate::Cnot { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    n_slots: usize,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Self> {
        // Delegate range validation to the register constructor.
        Statevector::zero_state(n_qubits)?;
        Ok(Circuit { n_qubits, gates: Vec::new(), n_slots: 0 })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// (single-qubit rotations, CNOTs).
    pub fn gate_counts(&self) -> (usize, usize) {
        let cx = self.gates.iter().filter(|g| matches!(g, Gate::Cnot { .. })).count();
        (self.gates.len() - cx, cx)
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::invalid(
                "circuit_build",
                format!("qubit {q} on {}-qubit circuit", self.n_qubits),
            ));
        }
        Ok(())
    }

    pub fn rx(&mut self, target: usize) -> Result<usize> {
        self.check_qubit(target)?;
        let slot = self.n_slots;
        self.gates.push(Gate::Rx { target, slot });
        self.n_slots += 1;
        Ok(slot)
    }

    pub fn ry(&mut self, target: usize) -> Result<usize> {
        self.check_qubit(target)?;
        let slot = self.n_slots;
        self.gates.push(Gate::Ry { target, slot });
        self.n_slots += 1;
        Ok(slot)
    }

    pub fn rz(&mut self, target: usize) -> Result<usize> {
        self.check_qubit(target)?;
        let slot = self.n_slots;
        self.gates.push(Gate::Rz { target, slot });
        self.n_slots += 1;
        Ok(slot)
    }

    pub fn cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::invalid("circuit_build", format!("cnot control == target == {control}")));
        }
        self.gates.push(Gate::Cnot { control, target });
        Ok(())
    }

    /// Structural check: qubit indices in range, each slot referenced
    /// exactly once across the gate list.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![0usize; self.n_slots];
        for g in &self.gates {
            match *g {
                Gate::Rx { target, slot } | Gate::Ry { target, slot } | Gate::Rz { target, slot } => {
                    self.check_qubit(target)?;
                    if slot >= self.n_slots {
                        return Err(Error::Internal(format!("slot {slot} out of range")));
                    }
                    seen[slot] += 1;
                }
                Gate::Cnot { control, target } => {
                    self.check_qubit(control)?;
                    self.check_qubit(target)?;
                    if control == target {
                        return Err(Error::Internal("cnot with equal qubits".to_string()));
                    }
                }
            }
        }
        if let Some(slot) = seen.iter().position(|&c| c != 1) {
            return Err(Error::Internal(format!("slot {slot} referenced {} times", seen[slot])));
        }
        Ok(())
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_slots {
            return Err(Error::ParamLength { got: theta.len(), expected: self.n_slots });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "simulate" });
        }
        Ok(())
    }

    /// Noiseless simulation from |0...0>.
    pub fn simulate(&self, theta: &[f64]) -> Result<Statevector> {
        self.check_theta(theta)?;
        let mut state = Statevector::zero_state(self.n_qubits)?;
        for g in &self.gates {
            match *g {
                Gate::Rx { target, slot } => state.apply_rx(target, theta[slot])?,
                Gate::Ry { target, slot } => state.apply_ry(target, theta[slot])?,
                Gate::Rz { target, slot } => state.apply_rz(target, theta[slot])?,
                Gate::Cnot { control, target } => state.apply_cnot(control, target)?,
            }
        }
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Internal(format!("norm drifted to {norm}")));
        }
        Ok(state)
    }

    /// Exact Born probabilities of the noiseless output state.
    pub fn exact_probabilities(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.simulate(theta)?.probabilities())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_are_sequential_and_unique() {
        let mut c = Circuit::new(2).unwrap();
        assert_eq!(c.ry(0).unwrap(), 0);
        assert_eq!(c.rz(1).unwrap(), 1);
        c.cnot(0, 1).unwrap();
        assert_eq!(c.rx(0).unwrap(), 2);
        assert_eq!(c.n_slots(), 3);
        c.validate().unwrap();
        assert_eq!(c.gate_counts(), (3, 1));
    }

    #[test]
    fn simulate_checks_theta_length_and_values() {
        let mut c = Circuit::new(1).unwrap();
        c.ry(0).unwrap();
        assert!(matches!(
            c.simulate(&[]),
            Err(Error::ParamLength { got: 0, expected: 1 })
        ));
        assert!(c.simulate(&[f64::NAN]).is_err());
        assert!(c.simulate(&[0.3]).is_ok());
    }

    #[test]
    fn builder_rejects_bad_indices() {
        let mut c = Circuit::new(2).unwrap();
        assert!(c.rx(2).is_err());
        assert!(c.cnot(0, 0).is_err());
        assert!(c.cnot(0, 2).is_err());
    }
}
