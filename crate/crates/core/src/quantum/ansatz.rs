//! Circuit builders for the training tasks.

use super::circuit::Circuit;
use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Hardware-efficient ansatz: per layer, RY on every qubit followed by a
/// CNOT chain (i, i+1). Parameters are independent per layer: n * layers.
pub fn qt_ansatz(n_qubits: usize, n_layers: usize) -> Result<Circuit> {
    if n_layers == 0 {
        return Err(Error::invalid("qt_ansatz", "zero layers".to_string()));
    }
    let mut c = Circuit::new(n_qubits)?;
    for _ in 0..n_layers {
        for q in 0..n_qubits {
            c.ry(q)?;
        }
        for q in 0..n_qubits.saturating_sub(1) {
            c.cnot(q, q + 1)?;
        }
    }
    Ok(c)
}

/// Qubits needed to index `m` states: ceil(log2 m).
pub fn qubits_for_states(m: usize) -> Result<usize> {
    if m < 2 {
        return Err(Error::invalid("qubits_for_states", format!("need at least 2 states, got {m}")));
    }
    Ok((m - 1).ilog2() as usize + 1)
}

pub const QML_QUBITS: usize = 4;
pub const QML_FEATURES: usize = 16;

/// Fixed four-qubit classifier circuit: an angle-encoding block of four
/// single-qubit rotation layers (RY, RZ, RX, RY; 16 slots) followed by
/// `var_layers` trainable layers of RY+RZ on each qubit and a CNOT chain.
#[derive(Debug, Clone)]
pub struct QmlCircuit {
    pub circuit: Circuit,
    pub n_encoder_slots: usize,
    pub n_var_slots: usize,
}

pub fn qml_circuit(var_layers: usize) -> Result<QmlCircuit> {
    let mut c = Circuit::new(QML_QUBITS)?;
    for q in 0..QML_QUBITS {
        c.ry(q)?;
    }
    for q in 0..QML_QUBITS {
        c.rz(q)?;
    }
    for q in 0..QML_QUBITS {
        c.rx(q)?;
    }
    for q in 0..QML_QUBITS {
        c.ry(q)?;
    }
    let n_encoder_slots = c.n_slots();
    for _ in 0..var_layers {
        for q in 0..QML_QUBITS {
            c.ry(q)?;
        }
        for q in 0..QML_QUBITS {
            c.rz(q)?;
        }
        for q in 0..QML_QUBITS - 1 {
            c.cnot(q, q + 1)?;
        }
    }
    let n_var_slots = c.n_slots() - n_encoder_slots;
    Ok(QmlCircuit { circuit: c, n_encoder_slots, n_var_slots })
}

impl QmlCircuit {
    /// Encoding angles for one 16-feature sample: angle = pi * feature.
    pub fn angles(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.n_encoder_slots {
            return Err(Error::shape(
                "qml_angles",
                format!("{} features for {} encoder slots", features.len(), self.n_encoder_slots),
            ));
        }
        Ok(features.iter().map(|f| PI * f).collect())
    }

    /// Full slot vector from encoding angles and trainable parameters.
    pub fn assemble(&self, angles: &[f64], var: &[f64]) -> Result<Vec<f64>> {
        if angles.len() != self.n_encoder_slots || var.len() != self.n_var_slots {
            return Err(Error::shape(
                "qml_assemble",
                format!(
                    "{} + {} slots for {} + {}",
                    angles.len(),
                    var.len(),
                    self.n_encoder_slots,
                    self.n_var_slots
                ),
            ));
        }
        let mut theta = Vec::with_capacity(angles.len() + var.len());
        theta.extend_from_slice(angles);
        theta.extend_from_slice(var);
        Ok(theta)
    }

    /// Slot indices of the trainable block.
    pub fn var_slots(&self) -> Vec<usize> {
        (self.n_encoder_slots..self.n_encoder_slots + self.n_var_slots).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qt_ansatz_slot_and_gate_counts() {
        let c = qt_ansatz(13, 1).unwrap();
        assert_eq!(c.n_slots(), 13);
        assert_eq!(c.gate_counts(), (13, 12));
        c.validate().unwrap();

        let c = qt_ansatz(4, 3).unwrap();
        assert_eq!(c.n_slots(), 12);
        assert_eq!(c.gate_counts(), (12, 9));
    }

    #[test]
    fn qubits_for_states_covers_powers_and_gaps() {
        assert_eq!(qubits_for_states(2).unwrap(), 1);
        assert_eq!(qubits_for_states(1024).unwrap(), 10);
        assert_eq!(qubits_for_states(1025).unwrap(), 11);
        assert_eq!(qubits_for_states(6690).unwrap(), 13);
        assert!(qubits_for_states(1).is_err());
    }

    #[test]
    fn qml_circuit_has_published_shape() {
        let q = qml_circuit(5).unwrap();
        assert_eq!(q.n_encoder_slots, 16);
        assert_eq!(q.n_var_slots, 40);
        q.circuit.validate().unwrap();
        let angles = q.angles(&vec![0.5; 16]).unwrap();
        assert!((angles[0] - PI / 2.0).abs() < 1e-15);
        let theta = q.assemble(&angles, &vec![0.0; 40]).unwrap();
        assert_eq!(theta.len(), q.circuit.n_slots());
    }
}
