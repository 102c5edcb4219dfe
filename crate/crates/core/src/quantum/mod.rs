//! Statevector simulation of parameterized circuits.

pub mod ansatz;
mod circuit;
mod observable;
pub mod reference;
mod shift;
mod state;

pub use circuit::{Circuit, Gate};
pub use observable::{exact_expectation, Observable};
pub use shift::{
    exact_expectation_grad, parameter_shift_grad, parameter_shift_grad_slots, ShiftEval,
};
pub use state::{Statevector, MAX_QUBITS};

use rand::Rng;

/// Random circuit over the full gate set with angles in [-pi, pi);
/// useful for randomized verification.
pub fn random_circuit<R: Rng>(rng: &mut R, n_qubits: usize, n_gates: usize) -> (Circuit, Vec<f64>) {
    let mut c = Circuit::new(n_qubits).expect("valid qubit count");
    let mut theta = Vec::new();
    for _ in 0..n_gates {
        let kind = if n_qubits > 1 { rng.random_range(0..4) } else { rng.random_range(0..3) };
        match kind {
            0..=2 => {
                let q = rng.random_range(0..n_qubits);
                match kind {
                    0 => c.rx(q),
                    1 => c.ry(q),
                    _ => c.rz(q),
                }
                .expect("valid qubit");
                theta.push(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
            }
            _ => {
                let a = rng.random_range(0..n_qubits);
                let mut b = rng.random_range(0..n_qubits - 1);
                if b >= a {
                    b += 1;
                }
                c.cnot(a, b).expect("distinct qubits");
            }
        }
    }
    (c, theta)
}
