//! The blending engine: postprocessor registry, quantum/classical branch
//! plumbing, and the lambda-weighted hybrid combination.
//!
//! lambda = 1 and lambda = 0 are exact short-circuits — the inactive branch
//! is never evaluated, so the reductions to pure-quantum / pure-classical
//! pipelines are bit-identical, and the skipped branch's parameters receive
//! exactly zero gradient.

use crate::autodiff::{ParamId, ParamSet, Tape, TapeBinding, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::mps::{MpsDecoder, MpsInput};
use crate::nqs::NqsNetwork;
use crate::quantum::{Circuit, Observable};
use crate::rng::derive_seed;
use crate::shots::{circuit_probabilities, sample_circuit, NoisePreset, ShotBudget};

/// What the quantum branch feeds downstream: the raw basis distribution
/// (decoder tasks) or grouped-Z expectations (classification).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutMode {
    Probabilities,
    Expectation,
}

/// Exact simulation or finite-shot estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShotMode {
    Exact,
    Finite(ShotBudget),
}

#[derive(Debug, Clone)]
pub struct QuantumBranch {
    pub circuit: Circuit,
    /// Tensor of trainable angles, covering slots `trainable_from..n_slots`.
    pub theta: ParamId,
    /// Slots below this index are input-driven (encoder angles).
    pub trainable_from: usize,
    pub shots: ShotMode,
    pub noise: NoisePreset,
    pub readout: ReadoutMode,
}

impl QuantumBranch {
    /// Splice input-driven encoder angles and the trainable tail together.
    pub fn full_theta(&self, pset: &ParamSet, encoder_angles: &[f64]) -> Result<Vec<f64>> {
        if encoder_angles.len() != self.trainable_from {
            return Err(Error::shape(
                "full_theta",
                format!("{} encoder angles, expected {}", encoder_angles.len(), self.trainable_from),
            ));
        }
        let tail = pset.value(self.theta).data();
        let mut full = Vec::with_capacity(self.trainable_from + tail.len());
        full.extend_from_slice(encoder_angles);
        full.extend_from_slice(tail);
        if full.len() != self.circuit.n_slots() {
            return Err(Error::ParamLength { got: full.len(), expected: self.circuit.n_slots() });
        }
        Ok(full)
    }

    /// Basis distribution for one evaluation: exact, or one trajectory +
    /// one shot batch, fully determined by `seed`.
    pub fn distribution(&self, theta_full: &[f64], seed: u64) -> Result<Vec<f64>> {
        match self.shots {
            ShotMode::Exact => circuit_probabilities(&self.circuit, theta_full, &self.noise, seed),
            ShotMode::Finite(ref budget) => {
                Ok(sample_circuit(&self.circuit, theta_full, &self.noise, budget, seed)?.probabilities())
            }
        }
    }

    pub fn trainable_slots(&self) -> std::ops::Range<usize> {
        self.trainable_from..self.circuit.n_slots()
    }
}

/// How the classical network output is interpreted downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicalMode {
    /// Raw logits (classification head).
    Logits,
    /// Sigmoid-squashed scalar per basis state (decoder value leg).
    Value,
    /// Softplus-normalized distribution over basis states.
    Distribution,
}

#[derive(Debug, Clone)]
pub struct ClassicalBranch {
    pub net: NqsNetwork,
    pub mode: ClassicalMode,
}

/// Closed registry of output maps applied to either branch.
#[derive(Debug, Clone)]
pub enum Postprocessor {
    Identity,
    Decoder(MpsDecoder),
    /// Sum ⟨Z_q⟩ over each listed group under the basis distribution, then
    /// softmax the group totals.
    QubitGroupSoftmax { groups: Vec<Vec<usize>> },
    /// Elementwise y = scale * x + shift with trainable vectors.
    Affine { scale: ParamId, shift: ParamId },
}

impl Postprocessor {
    pub fn kind(&self) -> &'static str {
        match self {
            Postprocessor::Identity => "identity",
            Postprocessor::Decoder(_) => "mps_decoder",
            Postprocessor::QubitGroupSoftmax { .. } => "qubit_group_softmax",
            Postprocessor::Affine { .. } => "affine",
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        match self {
            Postprocessor::Identity | Postprocessor::QubitGroupSoftmax { .. } => Vec::new(),
            Postprocessor::Decoder(dec) => dec.core_ids().iter().flatten().copied().collect(),
            Postprocessor::Affine { scale, shift } => vec![*scale, *shift],
        }
    }

    pub fn param_count(&self, pset: &ParamSet) -> usize {
        self.param_ids().iter().map(|&id| pset.value(id).numel()).sum()
    }

    pub fn decoder(&self) -> Option<&MpsDecoder> {
        match self {
            Postprocessor::Decoder(dec) => Some(dec),
            _ => None,
        }
    }

    /// Eigenvalue table [2^n, n_groups] for the grouped-Z map.
    fn group_table(groups: &[Vec<usize>], n_qubits: usize) -> Result<Tensor> {
        if groups.is_empty() {
            return Err(Error::invalid("postprocess", "empty qubit grouping".to_string()));
        }
        let dim = 1usize << n_qubits;
        let mut data = Vec::with_capacity(dim * groups.len());
        let obs: Vec<Observable> = groups.iter().map(|g| Observable::grouped_z(g)).collect();
        for o in &obs {
            o.validate(n_qubits)?;
        }
        for b in 0..dim {
            for o in &obs {
                data.push(o.eigenvalue(b, n_qubits));
            }
        }
        Tensor::new(vec![dim, groups.len()], data)
    }

    /// Row-wise application to a [B, w] tensor (vector maps only).
    pub fn apply_rows(&self, tape: &mut Tape, bind: &TapeBinding, x: TensorId) -> Result<TensorId> {
        let shape = tape.value(x).shape().to_vec();
        let (rows, cols) = match shape[..] {
            [r, c] => (r, c),
            _ => return Err(Error::shape("postprocess", format!("{:?} input, expected rows", shape))),
        };
        match self {
            Postprocessor::Identity => Ok(x),
            Postprocessor::Affine { scale, shift } => {
                let w = tape.value(bind.id(*scale)).numel();
                if w != cols {
                    return Err(Error::shape("postprocess", format!("affine width {w} on {cols} columns")));
                }
                let tiled = tape.concat(&vec![bind.id(*scale); rows])?;
                let tiled = tape.reshape(tiled, vec![rows, cols])?;
                let scaled = tape.mul(x, tiled)?;
                tape.add(scaled, bind.id(*shift))
            }
            Postprocessor::QubitGroupSoftmax { groups } => {
                if !cols.is_power_of_two() {
                    return Err(Error::shape("postprocess", format!("{cols} is not a basis dimension")));
                }
                let n = cols.trailing_zeros() as usize;
                let table = tape.constant(Self::group_table(groups, n)?)?;
                let logits = tape.matmul(x, table)?;
                tape.softmax(logits)
            }
            Postprocessor::Decoder(_) => {
                Err(Error::invalid("postprocess", "mps_decoder needs basis wiring, not a row map".to_string()))
            }
        }
    }

    /// Plain-value single-vector application (shifted quantum readouts).
    pub fn apply_vector_values(&self, pset: &ParamSet, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Postprocessor::Identity => Ok(x.to_vec()),
            Postprocessor::Affine { scale, shift } => {
                let (s, t) = (pset.value(*scale).data(), pset.value(*shift).data());
                if s.len() != x.len() {
                    return Err(Error::shape("postprocess", format!("affine width {} on {}", s.len(), x.len())));
                }
                Ok(x.iter().zip(s.iter().zip(t)).map(|(v, (a, b))| a * v + b).collect())
            }
            Postprocessor::QubitGroupSoftmax { groups } => {
                if !x.len().is_power_of_two() {
                    return Err(Error::shape("postprocess", format!("{} is not a basis dimension", x.len())));
                }
                let n = x.len().trailing_zeros() as usize;
                let table = Self::group_table(groups, n)?;
                let g = groups.len();
                let mut logits = vec![0.0; g];
                for (b, &p) in x.iter().enumerate() {
                    for (j, l) in logits.iter_mut().enumerate() {
                        *l += p * table.data()[b * g + j];
                    }
                }
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|&l| (l - mx).exp()).collect();
                let denom: f64 = exps.iter().sum();
                Ok(exps.iter().map(|e| e / denom).collect())
            }
            Postprocessor::Decoder(_) => {
                Err(Error::invalid("postprocess", "mps_decoder needs basis wiring, not a row map".to_string()))
            }
        }
    }

    /// Basis-state application: bits plus the branch value feed the decoder
    /// sites; identity passes the value through as a length-1 vector.
    pub fn apply_basis(
        &self,
        tape: &mut Tape,
        bind: &TapeBinding,
        bits: &[f64],
        value: TensorId,
    ) -> Result<TensorId> {
        match self {
            Postprocessor::Decoder(dec) => {
                let mut inputs: Vec<MpsInput> = bits.iter().map(|&b| MpsInput::Value(b)).collect();
                inputs.push(MpsInput::Node(value));
                dec.contract(tape, bind, &inputs)
            }
            Postprocessor::Identity => tape.reshape(value, vec![1]),
            other => Err(Error::invalid(
                "postprocess",
                format!("{} needs vector wiring, not a basis state", other.kind()),
            )),
        }
    }

    /// Plain-value basis-state application.
    pub fn apply_basis_values(&self, pset: &ParamSet, bits: &[f64], value: f64) -> Result<Vec<f64>> {
        match self {
            Postprocessor::Decoder(dec) => {
                let mut inputs = bits.to_vec();
                inputs.push(value);
                dec.contract_values(pset, &inputs)
            }
            Postprocessor::Identity => Ok(vec![value]),
            other => Err(Error::invalid(
                "postprocess",
                format!("{} needs vector wiring, not a basis state", other.kind()),
            )),
        }
    }
}

/// Branch outputs around a blended prediction. `q_out` is the post-G node:
/// its accumulated adjoint after backward() is the cotangent that the
/// parameter-shift readout contracts against.
#[derive(Debug, Clone, Copy)]
pub struct HybridOut {
    pub out: TensorId,
    pub q_out: Option<TensorId>,
    pub c_out: Option<TensorId>,
}

#[derive(Debug, Clone)]
pub struct HpqsModel {
    lambda: f64,
    pub quantum: Option<QuantumBranch>,
    pub classical: Option<ClassicalBranch>,
    pub g: Postprocessor,
    pub h: Postprocessor,
}

impl HpqsModel {
    pub fn new(
        lambda: f64,
        quantum: Option<QuantumBranch>,
        classical: Option<ClassicalBranch>,
        g: Postprocessor,
        h: Postprocessor,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid("hpqs_model", format!("lambda {lambda} outside [0,1]")));
        }
        if lambda > 0.0 && quantum.is_none() {
            return Err(Error::invalid("hpqs_model", "lambda > 0 needs a quantum branch".to_string()));
        }
        if lambda < 1.0 && classical.is_none() {
            return Err(Error::invalid("hpqs_model", "lambda < 1 needs a classical branch".to_string()));
        }
        Ok(HpqsModel { lambda, quantum, classical, g, h })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn uses_quantum(&self) -> bool {
        self.lambda > 0.0
    }

    pub fn uses_classical(&self) -> bool {
        self.lambda < 1.0
    }

    pub fn quantum(&self) -> Result<&QuantumBranch> {
        self.quantum.as_ref().ok_or_else(|| Error::invalid("hpqs_model", "no quantum branch".to_string()))
    }

    pub fn classical(&self) -> Result<&ClassicalBranch> {
        self.classical.as_ref().ok_or_else(|| Error::invalid("hpqs_model", "no classical branch".to_string()))
    }

    /// Deterministic trainable ordering: circuit angles, network tensors,
    /// G parameters, H parameters. lambda is a fixed hyperparameter and
    /// never appears.
    pub fn registry_trainables(&self, pset: &ParamSet) -> (Vec<ParamId>, usize) {
        let mut ids = Vec::new();
        if let Some(q) = &self.quantum {
            ids.push(q.theta);
        }
        if let Some(c) = &self.classical {
            ids.extend(c.net.param_ids());
        }
        ids.extend(self.g.param_ids());
        ids.extend(self.h.param_ids());
        let count = ids.iter().map(|&id| pset.value(id).numel()).sum();
        (ids, count)
    }

    /// lambda-weighted elementwise blend. Exactly 1 or 0 short-circuits to
    /// the active branch node untouched.
    pub fn blend(&self, tape: &mut Tape, q: Option<TensorId>, c: Option<TensorId>) -> Result<TensorId> {
        if self.lambda == 1.0 {
            return q.ok_or_else(|| Error::invalid("hybrid_blend", "missing quantum output".to_string()));
        }
        if self.lambda == 0.0 {
            return c.ok_or_else(|| Error::invalid("hybrid_blend", "missing classical output".to_string()));
        }
        let (q, c) = match (q, c) {
            (Some(q), Some(c)) => (q, c),
            _ => return Err(Error::invalid("hybrid_blend", "interior lambda needs both branches".to_string())),
        };
        if tape.value(q).shape() != tape.value(c).shape() {
            return Err(Error::shape(
                "hybrid_blend",
                format!("quantum {:?} vs classical {:?}", tape.value(q).shape(), tape.value(c).shape()),
            ));
        }
        let qs = tape.scale(q, self.lambda)?;
        let cs = tape.scale(c, 1.0 - self.lambda)?;
        tape.add(qs, cs)
    }

    /// Value-space blend with the same short-circuit rules.
    pub fn blend_values(&self, q: Option<&[f64]>, c: Option<&[f64]>) -> Result<Vec<f64>> {
        if self.lambda == 1.0 {
            return q.map(<[f64]>::to_vec).ok_or_else(|| Error::invalid("hybrid_blend", "missing quantum output".to_string()));
        }
        if self.lambda == 0.0 {
            return c.map(<[f64]>::to_vec).ok_or_else(|| Error::invalid("hybrid_blend", "missing classical output".to_string()));
        }
        let (q, c) = match (q, c) {
            (Some(q), Some(c)) => (q, c),
            _ => return Err(Error::invalid("hybrid_blend", "interior lambda needs both branches".to_string())),
        };
        if q.len() != c.len() {
            return Err(Error::shape("hybrid_blend", format!("quantum {} vs classical {}", q.len(), c.len())));
        }
        Ok(q.iter().zip(c).map(|(a, b)| self.lambda * a + (1.0 - self.lambda) * b).collect())
    }

    /// Expectation wiring (classification): grouped-softmax G over the basis
    /// distribution, affine-plus-softmax H over the network logits; blended
    /// rows each sum to one. `probs` rows are per-example distributions and
    /// enter the tape as gradient-tracked leaves so `q_out` carries a
    /// readable cotangent.
    pub fn expectation_predict_batch(
        &self,
        tape: &mut Tape,
        bind: &TapeBinding,
        features: &Tensor,
        probs: Option<&Tensor>,
    ) -> Result<HybridOut> {
        let q_out = if self.uses_quantum() {
            let p = probs.ok_or_else(|| Error::invalid("hybrid_predict", "missing quantum distributions".to_string()))?;
            let leaf = tape.leaf(p.clone(), true)?;
            Some(self.g.apply_rows(tape, bind, leaf)?)
        } else {
            None
        };
        let c_out = if self.uses_classical() {
            let logits = self.classical()?.net.forward_raw_batch(tape, bind, features)?;
            let shaped = self.h.apply_rows(tape, bind, logits)?;
            Some(tape.softmax(shaped)?)
        } else {
            None
        };
        let out = self.blend(tape, q_out, c_out)?;
        Ok(HybridOut { out, q_out, c_out })
    }

    /// Basis-state wiring (parameter generation): decoder G over
    /// (bits, sampled probability), decoder H over (bits, network value).
    /// The sampled probability enters as a gradient-tracked scalar leaf.
    pub fn basis_predict(
        &self,
        tape: &mut Tape,
        bind: &TapeBinding,
        index: usize,
        probs: Option<&[f64]>,
    ) -> Result<HybridOut> {
        let n = self.basis_qubits()?;
        if index >= (1usize << n) {
            return Err(Error::invalid("hybrid_predict", format!("basis index {index} on {n} qubits")));
        }
        let bits = crate::nqs::bits_of(index, n);
        let bits_f: Vec<f64> = bits.iter().map(|&b| f64::from(b)).collect();
        let q_out = if self.uses_quantum() {
            let p = probs.ok_or_else(|| Error::invalid("hybrid_predict", "missing quantum distribution".to_string()))?;
            if p.len() != 1 << n {
                return Err(Error::shape("hybrid_predict", format!("{} probabilities on {n} qubits", p.len())));
            }
            let leaf = tape.leaf(Tensor::scalar(p[index]), true)?;
            Some(self.g.apply_basis(tape, bind, &bits_f, leaf)?)
        } else {
            None
        };
        let c_out = if self.uses_classical() {
            let cb = self.classical()?;
            let row = Tensor::new(vec![1, n], bits_f.clone())?;
            let v = cb.net.value_batch(tape, bind, &row)?;
            Some(self.h.apply_basis(tape, bind, &bits_f, v)?)
        } else {
            None
        };
        let out = self.blend(tape, q_out, c_out)?;
        Ok(HybridOut { out, q_out, c_out })
    }

    /// Value-space basis prediction (no tape, no gradients).
    pub fn basis_predict_values(&self, pset: &ParamSet, index: usize, probs: Option<&[f64]>) -> Result<Vec<f64>> {
        let n = self.basis_qubits()?;
        if index >= (1usize << n) {
            return Err(Error::invalid("hybrid_predict", format!("basis index {index} on {n} qubits")));
        }
        let bits_f: Vec<f64> = crate::nqs::bits_of(index, n).iter().map(|&b| f64::from(b)).collect();
        let q = if self.uses_quantum() {
            let p = probs.ok_or_else(|| Error::invalid("hybrid_predict", "missing quantum distribution".to_string()))?;
            Some(self.g.apply_basis_values(pset, &bits_f, p[index])?)
        } else {
            None
        };
        let c = if self.uses_classical() {
            let cb = self.classical()?;
            let mut tape = Tape::new();
            let bind = pset.bind(&mut tape)?;
            let row = Tensor::new(vec![1, n], bits_f.clone())?;
            let v = cb.net.value_batch(&mut tape, &bind, &row)?;
            let value = tape.value(v).item()?;
            Some(self.h.apply_basis_values(pset, &bits_f, value)?)
        } else {
            None
        };
        self.blend_values(q.as_deref(), c.as_deref())
    }

    /// Qubit count of whichever branch defines the basis register.
    pub fn basis_qubits(&self) -> Result<usize> {
        if let Some(q) = &self.quantum {
            return Ok(q.circuit.n_qubits());
        }
        if let Some(c) = &self.classical {
            return Ok(c.net.input_width());
        }
        Err(Error::invalid("hpqs_model", "model has no branches".to_string()))
    }

    /// Per-step evaluation seed, derived so every (step, shift) pair gets an
    /// independent stream.
    pub fn step_seed(master: u64, epoch: usize, step: usize, branch: &str) -> u64 {
        derive_seed(master, branch, &[epoch as u64, step as u64])
    }

    /// After absorbing tape gradients, mark every registry parameter that
    /// received nothing (a short-circuited branch) as exactly zero so the
    /// optimizer step is well-defined.
    pub fn finalize_step_grads(&self, pset: &mut ParamSet) {
        let (ids, _) = self.registry_trainables(pset);
        for id in ids {
            pset.note_zero_grad(id);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::ansatz::qt_ansatz;
    use crate::shots::NoisePreset;

    fn decoder_model(lambda: f64, n: usize) -> (ParamSet, HpqsModel) {
        let mut ps = ParamSet::new();
        let circuit = qt_ansatz(n, 1).unwrap();
        let theta = ps.register("theta", Tensor::uniform(vec![circuit.n_slots()], -0.5, 0.5, &mut crate::rng::from_seed(9)));
        let net = NqsNetwork::bitstring_net(&mut ps, "gamma", n, 8, 1).unwrap();
        let g = Postprocessor::Decoder(MpsDecoder::new(&mut ps, "g", n + 1, 2, 1, 2).unwrap());
        let h = Postprocessor::Decoder(MpsDecoder::new(&mut ps, "h", n + 1, 1, 1, 3).unwrap());
        let model = HpqsModel::new(
            lambda,
            Some(QuantumBranch {
                circuit,
                theta,
                trainable_from: 0,
                shots: ShotMode::Exact,
                noise: NoisePreset::ideal(),
                readout: ReadoutMode::Probabilities,
            }),
            Some(ClassicalBranch { net, mode: ClassicalMode::Value }),
            g,
            h,
        )
        .unwrap();
        (ps, model)
    }

    #[test]
    fn blend_is_affine_in_lambda() {
        let q = [0.2, 0.7];
        let c = [0.4, 0.1];
        let (_, mut model) = decoder_model(0.5, 3);
        for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
            model.lambda = lambda;
            let out = model.blend_values(Some(&q), Some(&c)).unwrap();
            for j in 0..2 {
                let expect = lambda * q[j] + (1.0 - lambda) * c[j];
                assert!((out[j] - expect).abs() < 1e-15, "lambda {lambda}: {out:?}");
            }
        }
        // Midpoint spot value: 0.5 * 0.2 + 0.5 * 0.4 = 0.3.
        model.lambda = 0.5;
        assert!((model.blend_values(Some(&[0.2]), Some(&[0.4])).unwrap()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn lambda_one_is_bit_identical_to_quantum_branch() {
        let (ps, mut model) = decoder_model(1.0, 4);
        model.classical = None; // λ=1 must never touch the classical side
        let theta_full = model.quantum().unwrap().full_theta(&ps, &[]).unwrap();
        let probs = model.quantum().unwrap().distribution(&theta_full, 0).unwrap();
        for index in [0usize, 5, 15] {
            let bits: Vec<f64> = crate::nqs::bits_of(index, 4).iter().map(|&b| f64::from(b)).collect();
            let direct = model.g.apply_basis_values(&ps, &bits, probs[index]).unwrap();
            let blended = model.basis_predict_values(&ps, index, Some(&probs)).unwrap();
            assert_eq!(direct, blended); // bit-exact
        }
    }

    #[test]
    fn lambda_zero_is_bit_identical_to_classical_branch() {
        let (ps, mut model) = decoder_model(0.0, 4);
        model.quantum = None;
        for index in [0usize, 7, 12] {
            let blended = model.basis_predict_values(&ps, index, None).unwrap();
            let again = model.basis_predict_values(&ps, index, None).unwrap();
            assert_eq!(blended, again);
            // Identity-H variant returns the raw network value exactly.
            let mut id_model = model.clone();
            id_model.h = Postprocessor::Identity;
            let raw = id_model.basis_predict_values(&ps, index, None).unwrap();
            let mut tape = Tape::new();
            let bind = ps.bind(&mut tape).unwrap();
            let bits_f: Vec<f64> = crate::nqs::bits_of(index, 4).iter().map(|&b| f64::from(b)).collect();
            let row = Tensor::new(vec![1, 4], bits_f).unwrap();
            let v = id_model.classical().unwrap().net.value_batch(&mut tape, &bind, &row).unwrap();
            assert_eq!(raw[0], tape.value(v).item().unwrap());
        }
    }

    #[test]
    fn identity_g_at_lambda_one_returns_empirical_probability() {
        let (ps, mut model) = decoder_model(1.0, 3);
        model.classical = None;
        model.g = Postprocessor::Identity;
        let theta_full = model.quantum().unwrap().full_theta(&ps, &[]).unwrap();
        let probs = model.quantum().unwrap().distribution(&theta_full, 1).unwrap();
        for index in 0..8 {
            let out = model.basis_predict_values(&ps, index, Some(&probs)).unwrap();
            assert_eq!(out, vec![probs[index]]);
        }
    }

    #[test]
    fn interior_lambda_requires_both_branches() {
        let (_, model) = decoder_model(0.5, 3);
        assert!(model.blend_values(Some(&[0.1]), None).is_err());
        assert!(model.blend_values(None, Some(&[0.1])).is_err());
        assert!(HpqsModel::new(1.5, None, None, Postprocessor::Identity, Postprocessor::Identity).is_err());
        assert!(HpqsModel::new(-0.1, None, None, Postprocessor::Identity, Postprocessor::Identity).is_err());
    }

    #[test]
    fn branch_shape_mismatch_is_an_error() {
        let (_, model) = decoder_model(0.5, 3);
        let err = model.blend_values(Some(&[0.1, 0.2]), Some(&[0.3])).unwrap_err();
        assert!(err.to_string().contains("hybrid_blend"), "{err}");
    }

    #[test]
    fn convexity_preserved_on_the_simplex() {
        let (_, mut model) = decoder_model(0.5, 3);
        for lambda in [0.25, 0.5, 0.9] {
            model.lambda = lambda;
            let out = model.blend_values(Some(&[0.2, 0.3, 0.5]), Some(&[0.6, 0.1, 0.3])).unwrap();
            let total: f64 = out.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(out.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn registry_order_is_theta_gamma_g_h() {
        let (ps, model) = decoder_model(0.5, 4);
        let (ids, count) = model.registry_trainables(&ps);
        // theta [4], gamma tensors (4->8->1), g cores (5 sites), h cores.
        let g_params = model.g.param_count(&ps);
        let h_params = model.h.param_count(&ps);
        let gamma = model.classical.as_ref().unwrap().net.param_count();
        assert_eq!(count, 4 + gamma + g_params + h_params);
        assert_eq!(ids[0], model.quantum.as_ref().unwrap().theta);
        let names: Vec<&str> = ids.iter().map(|&id| ps.name(id)).collect();
        let first_gamma = names.iter().position(|n| n.starts_with("gamma")).unwrap();
        let first_g = names.iter().position(|n| n.starts_with("g.")).unwrap();
        let first_h = names.iter().position(|n| n.starts_with("h.")).unwrap();
        assert!(first_gamma < first_g && first_g < first_h);
        // lambda itself is nowhere in the registry.
        assert!(names.iter().all(|n| !n.contains("lambda")));
    }

    #[test]
    fn skipped_branch_parameters_get_exactly_zero_gradient() {
        // lambda = 0: backward-pass gradients for theta and G cores are
        // exactly zero because those leaves never join the graph.
        let (mut ps, model) = decoder_model(0.0, 3);
        let mut tape = Tape::new();
        let bind = ps.bind(&mut tape).unwrap();
        let out = model.basis_predict(&mut tape, &bind, 5, None).unwrap();
        let loss = tape.sum(out.out).unwrap();
        tape.backward(loss).unwrap();
        ps.absorb_grads(&tape, &bind);
        model.finalize_step_grads(&mut ps);
        let theta = model.quantum.as_ref().unwrap().theta;
        assert!(ps.grad(theta).unwrap().iter().all(|&g| g == 0.0));
        for &id in &model.g.param_ids() {
            assert!(ps.grad(id).unwrap().iter().all(|&g| g == 0.0));
        }
        // Classical side did receive gradient somewhere.
        let gamma_ids = model.classical.as_ref().unwrap().net.param_ids();
        let any_nonzero = gamma_ids.iter().any(|&id| ps.grad(id).unwrap().iter().any(|&g| g != 0.0));
        assert!(any_nonzero);

        // lambda = 1: mirror image.
        let (mut ps1, model1) = decoder_model(1.0, 3);
        let mut tape = Tape::new();
        let bind = ps1.bind(&mut tape).unwrap();
        let theta_full = model1.quantum().unwrap().full_theta(&ps1, &[]).unwrap();
        let probs = model1.quantum().unwrap().distribution(&theta_full, 3).unwrap();
        let out = model1.basis_predict(&mut tape, &bind, 2, Some(&probs)).unwrap();
        let loss = tape.sum(out.out).unwrap();
        tape.backward(loss).unwrap();
        ps1.absorb_grads(&tape, &bind);
        model1.finalize_step_grads(&mut ps1);
        for &id in &model1.classical.as_ref().unwrap().net.param_ids() {
            assert!(ps1.grad(id).unwrap().iter().all(|&g| g == 0.0));
        }
        for &id in &model1.h.param_ids() {
            assert!(ps1.grad(id).unwrap().iter().all(|&g| g == 0.0));
        }
        let any_g = model1.g.param_ids().iter().any(|&id| ps1.grad(id).unwrap().iter().any(|&g| g != 0.0));
        assert!(any_g);
    }

    #[test]
    fn q_out_cotangent_is_readable_after_backward() {
        let (ps, model) = decoder_model(0.5, 3);
        let mut tape = Tape::new();
        let bind = ps.bind(&mut tape).unwrap();
        let theta_full = model.quantum().unwrap().full_theta(&ps, &[]).unwrap();
        let probs = model.quantum().unwrap().distribution(&theta_full, 4).unwrap();
        let out = model.basis_predict(&mut tape, &bind, 1, Some(&probs)).unwrap();
        let loss = tape.sum(out.out).unwrap();
        tape.backward(loss).unwrap();
        let ct = tape.grad(out.q_out.unwrap()).expect("cotangent stored");
        // d(sum(0.5 q + 0.5 c))/dq = 0.5 exactly.
        assert_eq!(ct, &[0.5]);
    }

    #[test]
    fn grouped_softmax_rows_match_observable_expectations() {
        let groups = vec![vec![0usize, 1], vec![2, 3]];
        let g = Postprocessor::QubitGroupSoftmax { groups: groups.clone() };
        let ps = ParamSet::new();
        let mut r = crate::rng::from_seed(11);
        let mut probs = vec![0.0; 16];
        let mut total = 0.0;
        for p in probs.iter_mut() {
            *p = rand::Rng::random_range(&mut r, 0.0..1.0);
            total += *p;
        }
        for p in probs.iter_mut() {
            *p /= total;
        }
        let out = g.apply_vector_values(&ps, &probs).unwrap();
        let z01 = Observable::grouped_z(&groups[0]).expectation_from_probs(&probs, 4).unwrap();
        let z23 = Observable::grouped_z(&groups[1]).expectation_from_probs(&probs, 4).unwrap();
        let denom = z01.exp() + z23.exp();
        assert!((out[0] - z01.exp() / denom).abs() < 1e-12);
        assert!((out[1] - z23.exp() / denom).abs() < 1e-12);
        assert!((out[0] + out[1] - 1.0).abs() < 1e-12);

        // Tape rows agree with the value path.
        let mut tape = Tape::new();
        let bind = ps.bind(&mut tape).unwrap();
        let x = tape.leaf(Tensor::new(vec![1, 16], probs.clone()).unwrap(), true).unwrap();
        let rows = g.apply_rows(&mut tape, &bind, x).unwrap();
        let row = tape.value(rows).data();
        assert!((row[0] - out[0]).abs() < 1e-14 && (row[1] - out[1]).abs() < 1e-14);
    }

    #[test]
    fn affine_rows_tape_matches_values_and_takes_grads() {
        let mut ps = ParamSet::new();
        let scale = ps.register("h.scale", Tensor::new(vec![2], vec![1.5, 0.5]).unwrap());
        let shift = ps.register("h.shift", Tensor::new(vec![2], vec![0.1, -0.2]).unwrap());
        let h = Postprocessor::Affine { scale, shift };
        let vals = h.apply_vector_values(&ps, &[2.0, 4.0]).unwrap();
        assert!((vals[0] - 3.1).abs() < 1e-12 && (vals[1] - 1.8).abs() < 1e-12);
        let mut tape = Tape::new();
        let bind = ps.bind(&mut tape).unwrap();
        let x = tape.constant(Tensor::new(vec![2, 2], vec![2.0, 4.0, -1.0, 0.0]).unwrap()).unwrap();
        let y = h.apply_rows(&mut tape, &bind, x).unwrap();
        for (got, want) in tape.value(y).data().iter().zip([3.1, 1.8, -1.4, -0.2]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let loss = tape.sum(y).unwrap();
        tape.backward(loss).unwrap();
        ps.absorb_grads(&tape, &bind);
        // d/dscale = column sums of x; d/dshift = row count.
        assert_eq!(ps.grad(scale).unwrap(), &[1.0, 4.0]);
        assert_eq!(ps.grad(shift).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn postprocessor_arity_errors() {
        let ps = ParamSet::new();
        let mut tape = Tape::new();
        let bind = ps.bind(&mut tape).unwrap();
        let g = Postprocessor::QubitGroupSoftmax { groups: vec![vec![0]] };
        assert!(g.apply_basis_values(&ps, &[0.0], 0.5).is_err());
        let v = tape.constant(Tensor::scalar(0.5)).unwrap();
        assert!(g.apply_basis(&mut tape, &bind, &[0.0], v).is_err());
        // Non-power-of-two width cannot be a basis distribution.
        assert!(g.apply_vector_values(&ps, &[0.2, 0.3, 0.5]).is_err());
    }

    #[test]
    fn expectation_batch_sums_to_one_and_zero_init_is_uniform() {
        // Zero classical network + zero-logit affine -> (0.5, 0.5) exactly.
        let mut ps = ParamSet::new();
        let net = NqsNetwork::classifier(&mut ps, "gamma", 4, 3, 2, 1).unwrap();
        for &id in &net.param_ids() {
            ps.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let scale = ps.register("h.scale", Tensor::new(vec![2], vec![1.0, 1.0]).unwrap());
        let shift = ps.register("h.shift", Tensor::new(vec![2], vec![0.0, 0.0]).unwrap());
        let model = HpqsModel::new(
            0.0,
            None,
            Some(ClassicalBranch { net, mode: ClassicalMode::Logits }),
            Postprocessor::Identity,
            Postprocessor::Affine { scale, shift },
        )
        .unwrap();
        let mut tape = Tape::new();
        let bind = ps.bind(&mut tape).unwrap();
        let feats = Tensor::new(vec![2, 4], vec![0.1, 0.9, 0.3, 0.7, 0.0, 1.0, 0.5, 0.5]).unwrap();
        let out = model.expectation_predict_batch(&mut tape, &bind, &feats, None).unwrap();
        let rows = tape.value(out.out).data();
        assert_eq!(rows, &[0.5, 0.5, 0.5, 0.5]);
        assert!(out.q_out.is_none());
    }
}
