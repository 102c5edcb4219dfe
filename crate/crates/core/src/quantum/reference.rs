//! Slow dense-matrix simulation used to cross-check the strided kernels.
//! Each gate is expanded to a full 2^n x 2^n matrix and applied by plain
//! matrix-vector multiplication.

use super::circuit::{Circuit, Gate};
use crate::error::Result;
use num_complex::Complex64;

fn rotation_matrix(gate: &Gate, theta: &[f64]) -> [Complex64; 4] {
    match *gate {
        Gate::Rx { slot, .. } => {
            let (c, s) = ((theta[slot] / 2.0).cos(), (theta[slot] / 2.0).sin());
            [
                Complex64::new(c, 0.0),
                Complex64::new(0.0, -s),
                Complex64::new(0.0, -s),
                Complex64::new(c, 0.0),
            ]
        }
        Gate::Ry { slot, .. } => {
            let (c, s) = ((theta[slot] / 2.0).cos(), (theta[slot] / 2.0).sin());
            [
                Complex64::new(c, 0.0),
                Complex64::new(-s, 0.0),
                Complex64::new(s, 0.0),
                Complex64::new(c, 0.0),
            ]
        }
        Gate::Rz { slot, .. } => {
            let p = Complex64::from_polar(1.0, theta[slot] / 2.0);
            [p.conj(), Complex64::ZERO, Complex64::ZERO, p]
        }
        Gate::Cnot { .. } => unreachable!("rotation_matrix on cnot"),
    }
}

/// Full 2^n x 2^n row-major matrix for one gate.
pub fn gate_matrix(gate: &Gate, theta: &[f64], n_qubits: usize) -> Vec<Complex64> {
    let dim = 1usize << n_qubits;
    let mut m = vec![Complex64::ZERO; dim * dim];
    match *gate {
        Gate::Rx { target, .. } | Gate::Ry { target, .. } | Gate::Rz { target, .. } => {
            let u = rotation_matrix(gate, theta);
            let mask = 1usize << (n_qubits - 1 - target);
            for i in 0..dim {
                for j in 0..dim {
                    if (i & !mask) == (j & !mask) {
                        let bi = usize::from(i & mask != 0);
                        let bj = usize::from(j & mask != 0);
                        m[i * dim + j] = u[bi * 2 + bj];
                    }
                }
            }
        }
        Gate::Cnot { control, target } => {
            let mc = 1usize << (n_qubits - 1 - control);
            let mt = 1usize << (n_qubits - 1 - target);
            for i in 0..dim {
                let j = if i & mc != 0 { i ^ mt } else { i };
                m[j * dim + i] = Complex64::ONE;
            }
        }
    }
    m
}

/// Simulate by dense matrix-vector products. Exponential; verification only.
pub fn simulate_dense(circuit: &Circuit, theta: &[f64]) -> Result<Vec<Complex64>> {
    let dim = 1usize << circuit.n_qubits();
    let mut v = vec![Complex64::ZERO; dim];
    v[0] = Complex64::ONE;
    for g in circuit.gates() {
        let m = gate_matrix(g, theta, circuit.n_qubits());
        let mut out = vec![Complex64::ZERO; dim];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &m[i * dim..(i + 1) * dim];
            *o = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        v = out;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::random_circuit;
    use crate::rng;

    #[test]
    fn dense_agrees_with_strided_on_random_circuits() {
        for case in 0..25 {
            let mut r = rng::stream(99, "dense-check", &[case]);
            let (c, theta) = random_circuit(&mut r, 4, 24);
            let fast = c.simulate(&theta).unwrap();
            let slow = simulate_dense(&c, &theta).unwrap();
            for (a, b) in fast.amplitudes().iter().zip(&slow) {
                assert!((a - b).norm() < 1e-10, "case {case}: {a} vs {b}");
            }
        }
    }
}
