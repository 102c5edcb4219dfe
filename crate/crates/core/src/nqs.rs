//! Neural quantum state: an MLP over basis bitstrings (or raw features),
//! with ReLU between hidden layers. The raw scalar head is un-normalized;
//! distribution mode applies softplus and normalizes over the enumerated
//! basis, value mode squashes through a sigmoid so downstream feature maps
//! receive [0,1] inputs.

use crate::autodiff::{ParamId, ParamSet, Tape, TapeBinding, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone)]
pub struct NqsNetwork {
    widths: Vec<usize>,
    weights: Vec<ParamId>,
    biases: Vec<ParamId>,
}

pub const DEFAULT_HIDDEN: usize = 32;

impl NqsNetwork {
    /// Build linear layers `widths[0] -> widths[1] -> ...` with uniform
    /// +-1/sqrt(fan_in) init; parameters register under `prefix`.
    pub fn new(pset: &mut ParamSet, prefix: &str, widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("nqs_new", format!("bad layer widths {widths:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut r = rng::stream(seed, "nqs-init", &[l as u64]);
            let w = Tensor::uniform(vec![fan_in, fan_out], -bound, bound, &mut r);
            let b = Tensor::uniform(vec![fan_out], -bound, bound, &mut r);
            weights.push(pset.register(format!("{prefix}.w{l}"), w));
            biases.push(pset.register(format!("{prefix}.b{l}"), b));
        }
        Ok(NqsNetwork { widths: widths.to_vec(), weights, biases })
    }

    /// QT-style bitstring net: n -> hidden -> 1.
    pub fn bitstring_net(pset: &mut ParamSet, prefix: &str, n_qubits: usize, hidden: usize, seed: u64) -> Result<Self> {
        Self::new(pset, prefix, &[n_qubits, hidden, 1], seed)
    }

    /// QML classifier head: 16 -> 1 -> 2.
    pub fn classifier(pset: &mut ParamSet, prefix: &str, n_features: usize, hidden: usize, n_classes: usize, seed: u64) -> Result<Self> {
        Self::new(pset, prefix, &[n_features, hidden, n_classes], seed)
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("non-empty widths")
    }

    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.weights.iter().chain(&self.biases).copied().collect()
    }

    /// Raw forward on a [B, input] batch: linear layers with ReLU between
    /// them, no head activation.
    pub fn forward_raw_batch(&self, tape: &mut Tape, bind: &TapeBinding, x: &Tensor) -> Result<TensorId> {
        if x.shape().len() != 2 || x.shape()[1] != self.input_width() {
            return Err(Error::shape(
                "nqs_forward",
                format!("input {:?} for width {}", x.shape(), self.input_width()),
            ));
        }
        let mut h = tape.constant(x.clone())?;
        let n_layers = self.weights.len();
        for l in 0..n_layers {
            h = tape.matmul(h, bind.id(self.weights[l]))?;
            h = tape.add(h, bind.id(self.biases[l]))?;
            if l + 1 < n_layers {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Raw f_gamma(phi) for one bitstring, as a scalar node (output width 1).
    pub fn forward_raw(&self, tape: &mut Tape, bind: &TapeBinding, bits: &[u8]) -> Result<TensorId> {
        if bits.len() != self.input_width() {
            return Err(Error::shape(
                "nqs_forward",
                format!("{} bits for input width {}", bits.len(), self.input_width()),
            ));
        }
        let feats: Vec<f64> = bits.iter().map(|&b| f64::from(b)).collect();
        let x = Tensor::new(vec![1, bits.len()], feats)?;
        let out = self.forward_raw_batch(tape, bind, &x)?;
        tape.reshape(out, vec![self.output_width()])
    }

    /// Sigmoid-squashed batch values in (0,1), shape [B]; output width must
    /// be 1. This is the branch value fed to the H decoder.
    pub fn value_batch(&self, tape: &mut Tape, bind: &TapeBinding, x: &Tensor) -> Result<TensorId> {
        if self.output_width() != 1 {
            return Err(Error::shape("nqs_value", format!("output width {}", self.output_width())));
        }
        let raw = self.forward_raw_batch(tape, bind, x)?;
        let squashed = tape.sigmoid(raw)?;
        let rows = x.shape()[0];
        tape.reshape(squashed, vec![rows])
    }

    /// Normalized distribution over all 2^n basis states (Eq-3 style):
    /// softplus on the raw head, then division by the total.
    pub fn distribution(&self, tape: &mut Tape, bind: &TapeBinding, n_qubits: usize) -> Result<TensorId> {
        if self.input_width() != n_qubits {
            return Err(Error::shape(
                "nqs_distribution",
                format!("{n_qubits} qubits for input width {}", self.input_width()),
            ));
        }
        if self.output_width() != 1 {
            return Err(Error::shape("nqs_distribution", format!("output width {}", self.output_width())));
        }
        let x = basis_matrix(n_qubits)?;
        let raw = self.forward_raw_batch(tape, bind, &x)?;
        let raw = tape.reshape(raw, vec![1 << n_qubits])?;
        let positive = tape.softplus(raw)?;
        normalize_positive(tape, positive)
    }
}

/// Normalize a positive vector to sum one; errors on vanishing denominator.
pub fn normalize_positive(tape: &mut Tape, positive: TensorId) -> Result<TensorId> {
    let total = tape.sum(positive)?;
    let denom = tape.value(total).item()?;
    if denom < 1e-30 {
        return Err(Error::Underflow { op: "nqs_distribution", value: denom });
    }
    tape.div_scalar(positive, total)
}

/// Bits of a basis index, qubit 0 first (most significant bit).
pub fn bits_of(index: usize, n_qubits: usize) -> Vec<u8> {
    (0..n_qubits).map(|q| ((index >> (n_qubits - 1 - q)) & 1) as u8).collect()
}

/// [2^n, n] matrix whose row i holds the bit features of basis state i.
pub fn basis_matrix(n_qubits: usize) -> Result<Tensor> {
    if n_qubits == 0 || n_qubits > crate::quantum::MAX_QUBITS {
        return Err(Error::QubitCount { n: n_qubits });
    }
    let dim = 1usize << n_qubits;
    let mut data = Vec::with_capacity(dim * n_qubits);
    for i in 0..dim {
        data.extend(bits_of(i, n_qubits).iter().map(|&b| f64::from(b)));
    }
    Tensor::new(vec![dim, n_qubits], data)
}
