//! Dense statevector with in-place gate application.
//!
//! Basis-index convention: qubit 0 maps to the most significant bit of the
//! basis index, so on two qubits |q0 q1> = |10> is index 2. The stride for
//! qubit q on n qubits is 2^(n-1-q).

use crate::error::{Error, Result};
use num_complex::Complex64;

pub const MAX_QUBITS: usize = 16;

#[derive(Debug, Clone)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl Statevector {
    /// |0...0> on n qubits, n in 1..=16.
    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::QubitCount { n: n_qubits });
        }
        let mut amps = vec![Complex64::ZERO; 1 << n_qubits];
        amps[0] = Complex64::ONE;
        Ok(Statevector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    fn mask(&self, qubit: usize) -> Result<usize> {
        if qubit >= self.n_qubits {
            return Err(Error::invalid(
                "qubit_index",
                format!("qubit {qubit} on {}-qubit register", self.n_qubits),
            ));
        }
        Ok(1 << (self.n_qubits - 1 - qubit))
    }

    /// Apply an arbitrary single-qubit unitary given row-major
    /// [u00, u01, u10, u11].
    pub fn apply_1q(&mut self, qubit: usize, u: [Complex64; 4]) -> Result<()> {
        let m = self.mask(qubit)?;
        for i in 0..self.amps.len() {
            if i & m == 0 {
                let j = i | m;
                let (a, b) = (self.amps[i], self.amps[j]);
                self.amps[i] = u[0] * a + u[1] * b;
                self.amps[j] = u[2] * a + u[3] * b;
            }
        }
        Ok(())
    }

    pub fn apply_rx(&mut self, qubit: usize, angle: f64) -> Result<()> {
        let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
        let ci = Complex64::new(c, 0.0);
        let msi = Complex64::new(0.0, -s);
        self.apply_1q(qubit, [ci, msi, msi, ci])
    }

    pub fn apply_ry(&mut self, qubit: usize, angle: f64) -> Result<()> {
        let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
        let (c, s) = (Complex64::new(c, 0.0), Complex64::new(s, 0.0));
        self.apply_1q(qubit, [c, -s, s, c])
    }

    pub fn apply_rz(&mut self, qubit: usize, angle: f64) -> Result<()> {
        let phase = Complex64::from_polar(1.0, angle / 2.0);
        self.apply_1q(qubit, [phase.conj(), Complex64::ZERO, Complex64::ZERO, phase])
    }

    pub fn apply_pauli_x(&mut self, qubit: usize) -> Result<()> {
        let m = self.mask(qubit)?;
        for i in 0..self.amps.len() {
            if i & m == 0 {
                self.amps.swap(i, i | m);
            }
        }
        Ok(())
    }

    pub fn apply_pauli_y(&mut self, qubit: usize) -> Result<()> {
        let m = self.mask(qubit)?;
        let i_pos = Complex64::new(0.0, 1.0);
        for i in 0..self.amps.len() {
            if i & m == 0 {
                let j = i | m;
                let (a, b) = (self.amps[i], self.amps[j]);
                self.amps[i] = -i_pos * b;
                self.amps[j] = i_pos * a;
            }
        }
        Ok(())
    }

    pub fn apply_pauli_z(&mut self, qubit: usize) -> Result<()> {
        let m = self.mask(qubit)?;
        for i in 0..self.amps.len() {
            if i & m != 0 {
                self.amps[i] = -self.amps[i];
            }
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        if control == target {
            return Err(Error::invalid("cnot", format!("control == target == {control}")));
        }
        let mc = self.mask(control)?;
        let mt = self.mask(target)?;
        for i in 0..self.amps.len() {
            if i & mc != 0 && i & mt == 0 {
                self.amps.swap(i, i | mt);
            }
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Born-rule probabilities per basis state.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}
