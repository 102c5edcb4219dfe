//! Chunked low-rank-update generation: the flat LoRA parameter vector
//! r*(d+k) is produced in n_ch chunks of n_mlp entries, one chunk per basis
//! state of a ceil(log2 n_ch)-qubit register, then reshaped into A and B
//! and trained against a frozen-layer reconstruction loss.

use crate::autodiff::{Optimizer, ParamSet, Tape, TapeBinding, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::hybrid::{
    ClassicalBranch, ClassicalMode, HpqsModel, Postprocessor, QuantumBranch, ReadoutMode, ShotMode,
};
use crate::mps::MpsDecoder;
use crate::nqs::{bits_of, NqsNetwork};
use crate::quantum::ansatz::qt_ansatz;
use crate::quantum::{parameter_shift_grad_slots, MAX_QUBITS};
use crate::rng::derive_seed;
use crate::shots::{circuit_probabilities, NoisePreset, ShotBudget};
use crate::tasks::{EpochRecord, RunMetrics, Variant};

/// Qubits needed to index ceil(m / n_mlp) chunks.
pub fn qpa_qubit_count(m: usize, n_mlp: usize) -> Result<usize> {
    if n_mlp == 0 {
        return Err(Error::invalid("qpa_qubits", "chunk size must be positive".to_string()));
    }
    let n_ch = m.div_ceil(n_mlp);
    if n_ch == 0 {
        return Err(Error::invalid("qpa_qubits", "zero chunks (empty parameter vector)".to_string()));
    }
    Ok(if n_ch == 1 { 0 } else { (n_ch - 1).ilog2() as usize + 1 })
}

/// LoRA scaling is alpha/r with alpha fixed at 2r.
const LORA_SCALE: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct QpaConfig {
    pub variant: Variant,
    pub d: usize,
    pub k: usize,
    pub rank: usize,
    pub n_mlp: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lambda: f64,
    pub shot_multiplier: f64,
    pub noise: NoisePreset,
    pub ansatz_layers: usize,
    pub nqs_hidden: usize,
    pub bond_g: usize,
    pub bond_h: usize,
    pub n_probe: usize,
}

impl Default for QpaConfig {
    fn default() -> Self {
        QpaConfig {
            variant: Variant::HpqsFinite,
            d: 64,
            k: 64,
            rank: 4,
            n_mlp: 64,
            epochs: 3,
            steps_per_epoch: 20,
            lr: 1e-3,
            weight_decay: 0.01,
            lambda: 0.5,
            shot_multiplier: 10.0,
            noise: NoisePreset::ideal(),
            ansatz_layers: 8,
            nqs_hidden: 32,
            bond_g: 10,
            bond_h: 4,
            n_probe: 32,
        }
    }
}

pub struct QpaModel {
    pub pset: ParamSet,
    pub model: HpqsModel,
    pub d: usize,
    pub k: usize,
    pub rank: usize,
    pub n_mlp: usize,
    pub n_ch: usize,
    pub n_qubits: usize,
    bits: Vec<Vec<f64>>,
    w0: Tensor,
    probe: Tensor,
    target: Tensor,
}

impl QpaModel {
    pub fn flat_len(&self) -> usize {
        self.rank * (self.d + self.k)
    }
}

pub fn build_qpa(config: &QpaConfig, seed: u64) -> Result<QpaModel> {
    let (d, k, r) = (config.d, config.k, config.rank);
    let m = r
        .checked_mul(d + k)
        .ok_or_else(|| Error::invalid("qpa_task", "parameter count overflow".to_string()))?;
    let n = qpa_qubit_count(m, config.n_mlp)?;
    let n_ch = m.div_ceil(config.n_mlp);
    if n_ch < 2 {
        return Err(Error::invalid(
            "qpa_task",
            format!("{n_ch} chunk(s); chunked generation needs at least 2"),
        ));
    }
    if n > MAX_QUBITS {
        return Err(Error::invalid(
            "qpa_task",
            format!("{n_ch} chunks need {n} qubits, above the {MAX_QUBITS}-qubit ceiling"),
        ));
    }
    let mut pset = ParamSet::new();
    let lambda = match config.variant {
        Variant::PqcExact | Variant::PqcFinite => 1.0,
        Variant::Nqs => 0.0,
        Variant::HpqsFinite => config.lambda,
    };
    // Registration order fixes the registry ordering: theta, gamma, G, H.
    let quantum = if lambda > 0.0 {
        let circuit = qt_ansatz(n, config.ansatz_layers)?;
        let theta = pset.register(
            "theta",
            Tensor::uniform(vec![circuit.n_slots()], -0.3, 0.3, &mut crate::rng::stream(seed, "theta-init", &[])),
        );
        let shots = match config.variant {
            Variant::PqcExact => ShotMode::Exact,
            _ => ShotMode::Finite(ShotBudget::from_multiplier(config.shot_multiplier, n)?),
        };
        Some(QuantumBranch {
            circuit,
            theta,
            trainable_from: 0,
            shots,
            noise: config.noise.clone(),
            readout: ReadoutMode::Probabilities,
        })
    } else {
        None
    };
    let classical = if lambda < 1.0 {
        let net = NqsNetwork::bitstring_net(&mut pset, "gamma", n, config.nqs_hidden, derive_seed(seed, "nqs-seed", &[]))?;
        Some(ClassicalBranch { net, mode: ClassicalMode::Value })
    } else {
        None
    };
    let g = if lambda > 0.0 {
        Postprocessor::Decoder(MpsDecoder::new(
            &mut pset,
            "g",
            n + 1,
            config.bond_g,
            config.n_mlp,
            derive_seed(seed, "g-init", &[]),
        )?)
    } else {
        Postprocessor::Identity
    };
    let h = if lambda < 1.0 {
        Postprocessor::Decoder(MpsDecoder::new(
            &mut pset,
            "h",
            n + 1,
            config.bond_h,
            config.n_mlp,
            derive_seed(seed, "h-init", &[]),
        )?)
    } else {
        Postprocessor::Identity
    };
    let model = HpqsModel::new(lambda, quantum, classical, g, h)?;
    let bits = (0..n_ch)
        .map(|i| bits_of(i, n).iter().map(|&b| f64::from(b)).collect())
        .collect();

    // Frozen layer, probe batch, and a realizable low-rank target mapping.
    let scale = 1.0 / (k as f64).sqrt();
    let w0 = Tensor::uniform(vec![d, k], -scale, scale, &mut crate::rng::stream(seed, "base-weight", &[]));
    let probe = Tensor::uniform(vec![config.n_probe, k], -1.0, 1.0, &mut crate::rng::stream(seed, "probe", &[]));
    let a_star = Tensor::uniform(vec![r, k], -0.5, 0.5, &mut crate::rng::stream(seed, "target-a", &[]));
    let b_star = Tensor::uniform(vec![d, r], -0.5, 0.5, &mut crate::rng::stream(seed, "target-b", &[]));
    let target = {
        let mut tape = Tape::new();
        let an = tape.constant(a_star)?;
        let bn = tape.constant(b_star)?;
        let y = lora_forward(&mut tape, &w0, an, bn, &probe)?;
        tape.value(y).clone()
    };
    Ok(QpaModel { pset, model, d, k, rank: r, n_mlp: config.n_mlp, n_ch, n_qubits: n, bits, w0, probe, target })
}

/// Probe responses of the adapted layer: X (W0 + 2 B A)^T.
fn lora_forward(tape: &mut Tape, w0: &Tensor, a_mat: TensorId, b_mat: TensorId, probe: &Tensor) -> Result<TensorId> {
    let delta = tape.matmul(b_mat, a_mat)?;
    let scaled = tape.scale(delta, LORA_SCALE)?;
    let w0n = tape.constant(w0.clone())?;
    let w = tape.add(w0n, scaled)?;
    let wt = tape.transpose(w)?;
    let xn = tape.constant(probe.clone())?;
    tape.matmul(xn, wt)
}

/// First-n_ch basis rows as network input.
fn basis_rows(qm: &QpaModel) -> Result<Tensor> {
    let mut data = Vec::with_capacity(qm.n_ch * qm.n_qubits);
    for b in &qm.bits {
        data.extend_from_slice(b);
    }
    Tensor::new(vec![qm.n_ch, qm.n_qubits], data)
}

/// On-tape chunk generation; returns the flat node (already truncated to
/// r(d+k)) and the per-chunk post-G nodes.
fn generate_on_tape(
    qm: &QpaModel,
    tape: &mut Tape,
    bind: &TapeBinding,
    probs: Option<&[f64]>,
) -> Result<(TensorId, Vec<TensorId>)> {
    let probs_leaf = if qm.model.uses_quantum() {
        let p = probs.ok_or_else(|| Error::Internal("quantum variant without a sample".to_string()))?;
        if p.len() != 1 << qm.n_qubits {
            return Err(Error::shape("qpa_generate", format!("{} probabilities for {} qubits", p.len(), qm.n_qubits)));
        }
        Some(tape.leaf(Tensor::new(vec![p.len()], p.to_vec())?, true)?)
    } else {
        None
    };
    let values = if qm.model.uses_classical() {
        let rows = basis_rows(qm)?;
        Some(qm.model.classical()?.net.value_batch(tape, bind, &rows)?)
    } else {
        None
    };
    let mut q_nodes = Vec::new();
    let mut chunks = Vec::with_capacity(qm.n_ch);
    for i in 0..qm.n_ch {
        let q_i = match probs_leaf {
            Some(leaf) => {
                let v = tape.gather_scalar(leaf, i)?;
                let node = qm.model.g.apply_basis(tape, bind, &qm.bits[i], v)?;
                q_nodes.push(node);
                Some(node)
            }
            None => None,
        };
        let c_i = match values {
            Some(all) => {
                let v = tape.slice(all, i, 1)?;
                Some(qm.model.h.apply_basis(tape, bind, &qm.bits[i], v)?)
            }
            None => None,
        };
        chunks.push(qm.model.blend(tape, q_i, c_i)?);
    }
    let full = tape.concat(&chunks)?;
    let flat = tape.slice(full, 0, qm.flat_len())?;
    Ok((flat, q_nodes))
}

/// Value-space chunk generation, evaluating chunks in `order` but always
/// writing chunk i into slot i (assembly must not depend on the order).
pub fn generate_chunk_values(qm: &QpaModel, probs: Option<&[f64]>, order: &[usize]) -> Result<Vec<f64>> {
    if order.len() != qm.n_ch {
        return Err(Error::invalid("qpa_generate", format!("order lists {} of {} chunks", order.len(), qm.n_ch)));
    }
    let values = if qm.model.uses_classical() {
        let rows = basis_rows(qm)?;
        let mut tape = Tape::new();
        let bind = qm.pset.bind(&mut tape)?;
        let v = qm.model.classical()?.net.value_batch(&mut tape, &bind, &rows)?;
        Some(tape.value(v).data().to_vec())
    } else {
        None
    };
    let mut full = vec![0.0; qm.n_ch * qm.n_mlp];
    for &i in order {
        if i >= qm.n_ch {
            return Err(Error::invalid("qpa_generate", format!("chunk index {i} of {}", qm.n_ch)));
        }
        let q = match probs {
            Some(p) if qm.model.uses_quantum() => {
                Some(qm.model.g.apply_basis_values(&qm.pset, &qm.bits[i], p[i])?)
            }
            None if !qm.model.uses_quantum() => None,
            _ => return Err(Error::Internal("sample presence mismatch".to_string())),
        };
        let c = values.as_ref().map(|v| qm.model.h.apply_basis_values(&qm.pset, &qm.bits[i], v[i])).transpose()?;
        let chunk = qm.model.blend_values(q.as_deref(), c.as_deref())?;
        full[i * qm.n_mlp..(i + 1) * qm.n_mlp].copy_from_slice(&chunk);
    }
    full.truncate(qm.flat_len());
    Ok(full)
}

/// Reshape the flat vector into A (r x k) then B (d x r), row-major.
pub fn assemble_ab(qm: &QpaModel, flat: &[f64]) -> Result<(Tensor, Tensor)> {
    if flat.len() != qm.flat_len() {
        return Err(Error::shape("qpa_assemble", format!("flat length {} needs {}", flat.len(), qm.flat_len())));
    }
    let ak = qm.rank * qm.k;
    let a = Tensor::new(vec![qm.rank, qm.k], flat[..ak].to_vec())?;
    let b = Tensor::new(vec![qm.d, qm.rank], flat[ak..].to_vec())?;
    Ok((a, b))
}

fn forward_loss_values(qm: &QpaModel, flat: &[f64]) -> Result<f64> {
    let (a, b) = assemble_ab(qm, flat)?;
    let mut tape = Tape::new();
    let an = tape.constant(a)?;
    let bn = tape.constant(b)?;
    let y = lora_forward(&mut tape, &qm.w0, an, bn, &qm.probe)?;
    let tn = tape.constant(qm.target.clone())?;
    let loss = tape.mse_loss(y, tn)?;
    tape.value(loss).item()
}

/// Reconstruction loss from an exact (shot-free) forward pass.
pub fn eval_loss(qm: &QpaModel, seed: u64, epoch: usize) -> Result<f64> {
    let probs = if qm.model.uses_quantum() {
        let branch = qm.model.quantum()?;
        let theta_full = branch.full_theta(&qm.pset, &[])?;
        Some(circuit_probabilities(&branch.circuit, &theta_full, &branch.noise, derive_seed(seed, "eval", &[epoch as u64]))?)
    } else {
        None
    };
    let order: Vec<usize> = (0..qm.n_ch).collect();
    let flat = generate_chunk_values(qm, probs.as_deref(), &order)?;
    forward_loss_values(qm, &flat)
}

/// Per-chunk affine coefficients of G in its value-site input, reduced
/// against the cotangent: f(p) = offset + sum_i w_i p_i.
fn linearize_readout(qm: &QpaModel, cotangent: &[Option<Vec<f64>>]) -> Result<(f64, Vec<f64>)> {
    let mut offset = 0.0;
    let mut weights = Vec::with_capacity(qm.n_ch);
    for i in 0..qm.n_ch {
        match &cotangent[i] {
            Some(ct) => {
                let at0 = qm.model.g.apply_basis_values(&qm.pset, &qm.bits[i], 0.0)?;
                let at1 = qm.model.g.apply_basis_values(&qm.pset, &qm.bits[i], 1.0)?;
                offset += ct.iter().zip(&at0).map(|(c, b)| c * b).sum::<f64>();
                weights.push(ct.iter().zip(at1.iter().zip(&at0)).map(|(c, (x1, x0))| c * (x1 - x0)).sum());
            }
            None => weights.push(0.0),
        }
    }
    Ok((offset, weights))
}

fn accumulate_theta_grad(
    qm: &mut QpaModel,
    cotangent: &[Option<Vec<f64>>],
    seed: u64,
    step_index: &[u64],
) -> Result<()> {
    let branch = qm.model.quantum()?.clone();
    let theta_full = branch.full_theta(&qm.pset, &[])?;
    let slots: Vec<usize> = branch.trainable_slots().collect();
    let (offset, weights) = linearize_readout(qm, cotangent)?;
    let grad_full = parameter_shift_grad_slots(&theta_full, &slots, |theta_p, ev| {
        let mut idx = step_index.to_vec();
        idx.extend([ev.slot as u64, u64::from(ev.sign > 0)]);
        let probs = branch.distribution(theta_p, derive_seed(seed, "shift", &idx))?;
        Ok(offset + weights.iter().zip(&probs).map(|(w, p)| w * p).sum::<f64>())
    })?;
    let theta = qm.model.quantum()?.theta;
    qm.pset.add_grad(theta, &grad_full)
}

pub fn run_qpa(config: &QpaConfig, seed: u64) -> Result<RunMetrics> {
    config.noise.validate()?;
    let mut qm = build_qpa(config, seed)?;
    let mut opt = Optimizer::adamw(config.lr, config.weight_decay);
    let (_, trainable) = qm.model.registry_trainables(&qm.pset);
    let n_shot = match qm.model.quantum.as_ref().map(|q| q.shots) {
        Some(ShotMode::Finite(b)) => Some(b.n_shot),
        _ => None,
    };
    let initial_loss = eval_loss(&qm, seed, usize::MAX)?;
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        for step in 0..config.steps_per_epoch {
            let probs = if qm.model.uses_quantum() {
                let branch = qm.model.quantum()?;
                let theta_full = branch.full_theta(&qm.pset, &[])?;
                Some(branch.distribution(&theta_full, derive_seed(seed, "train-sample", &[epoch as u64, step as u64]))?)
            } else {
                None
            };
            let mut tape = Tape::new();
            let bind = qm.pset.bind(&mut tape)?;
            let (flat, q_nodes) = generate_on_tape(&qm, &mut tape, &bind, probs.as_deref())?;
            let ak = qm.rank * qm.k;
            let a_flat = tape.slice(flat, 0, ak)?;
            let a_mat = tape.reshape(a_flat, vec![qm.rank, qm.k])?;
            let b_flat = tape.slice(flat, ak, qm.d * qm.rank)?;
            let b_mat = tape.reshape(b_flat, vec![qm.d, qm.rank])?;
            let y = lora_forward(&mut tape, &qm.w0, a_mat, b_mat, &qm.probe)?;
            let tn = tape.constant(qm.target.clone())?;
            let loss = tape.mse_loss(y, tn)?;
            tape.backward(loss)?;
            qm.pset.absorb_grads(&tape, &bind);
            if !q_nodes.is_empty() {
                // Tail chunks past the truncation point carry no adjoint.
                let ct: Vec<Option<Vec<f64>>> =
                    q_nodes.iter().map(|&n| tape.grad(n).map(<[f64]>::to_vec)).collect();
                accumulate_theta_grad(&mut qm, &ct, seed, &[epoch as u64, step as u64])?;
            }
            qm.model.finalize_step_grads(&mut qm.pset);
            opt.step(&mut qm.pset)?;
        }
        let loss = eval_loss(&qm, seed, epoch)?;
        epochs.push(EpochRecord { loss, accuracy: None });
    }
    Ok(RunMetrics { epochs, trainable_count: trainable, n_shot, initial_loss: Some(initial_loss) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qubit_count_matches_paper_instances() {
        assert_eq!(qpa_qubit_count(204_100, 512).unwrap(), 9);
        assert_eq!(qpa_qubit_count(1_032_192, 4096).unwrap(), 8);
    }

    #[test]
    fn qubit_count_matches_brute_force() {
        let mut r = crate::rng::stream(11, "qubit-pairs", &[]);
        use rand::Rng;
        for _ in 0..20 {
            let m = r.random_range(1usize..2_000_000);
            let n_mlp = r.random_range(1usize..8192);
            let n_ch = m.div_ceil(n_mlp);
            let mut brute = 0usize;
            while (1usize << brute) < n_ch {
                brute += 1;
            }
            assert_eq!(qpa_qubit_count(m, n_mlp).unwrap(), brute, "m={m} n_mlp={n_mlp}");
        }
        assert!(qpa_qubit_count(100, 0).is_err());
        assert!(qpa_qubit_count(0, 8).is_err());
        assert_eq!(qpa_qubit_count(5, 8).unwrap(), 0); // single chunk
    }

    fn small_config(variant: Variant) -> QpaConfig {
        QpaConfig { variant, epochs: 1, steps_per_epoch: 2, n_probe: 8, ..QpaConfig::default() }
    }

    #[test]
    fn parameter_totals_default_instance() {
        // theta 24, gamma 161, G 13040, H 2096.
        for (variant, expect) in [
            (Variant::PqcFinite, 24 + 13040),
            (Variant::Nqs, 161 + 2096),
            (Variant::HpqsFinite, 24 + 161 + 13040 + 2096),
        ] {
            let qm = build_qpa(&small_config(variant), 1).unwrap();
            let (_, count) = qm.model.registry_trainables(&qm.pset);
            assert_eq!(count, expect, "{variant:?}");
            assert_eq!(qm.n_ch, 8);
            assert_eq!(qm.n_qubits, 3);
            assert_eq!(qm.flat_len(), 512);
        }
    }

    #[test]
    fn assembled_shapes_follow_the_lora_layout() {
        let qm = build_qpa(&small_config(Variant::Nqs), 2).unwrap();
        let flat: Vec<f64> = (0..512).map(|i| i as f64).collect();
        let (a, b) = assemble_ab(&qm, &flat).unwrap();
        assert_eq!(a.shape(), &[4, 64]);
        assert_eq!(b.shape(), &[64, 4]);
        // A takes the head row-major, B the remainder.
        assert_eq!(a.data()[0], 0.0);
        assert_eq!(a.data()[64], 64.0); // A[1][0]
        assert_eq!(b.data()[0], 256.0); // first entry after A
        assert_eq!(b.data()[4], 260.0); // B[1][0]
    }

    #[test]
    fn chunk_evaluation_order_does_not_change_the_result() {
        let qm = build_qpa(&small_config(Variant::HpqsFinite), 3).unwrap();
        let branch = qm.model.quantum().unwrap();
        let theta_full = branch.full_theta(&qm.pset, &[]).unwrap();
        let probs = branch.distribution(&theta_full, 99).unwrap();
        let ascending: Vec<usize> = (0..qm.n_ch).collect();
        let mut reversed = ascending.clone();
        reversed.reverse();
        let shuffled = vec![3, 0, 6, 1, 7, 2, 5, 4];
        let base = generate_chunk_values(&qm, Some(&probs), &ascending).unwrap();
        for order in [&reversed, &shuffled] {
            let other = generate_chunk_values(&qm, Some(&probs), order).unwrap();
            assert_eq!(base, other); // bit-identical
        }
    }

    #[test]
    fn tail_entries_are_dropped_deterministically() {
        // r(d+k) = 2*(5+3) = 16 entries from 3 chunks of 6 -> 18 generated,
        // last 2 dropped.
        let config = QpaConfig {
            d: 5,
            k: 3,
            rank: 2,
            n_mlp: 6,
            bond_g: 3,
            bond_h: 2,
            ..small_config(Variant::HpqsFinite)
        };
        let qm = build_qpa(&config, 4).unwrap();
        assert_eq!(qm.n_ch, 3);
        assert_eq!(qm.n_qubits, 2);
        assert_eq!(qm.flat_len(), 16);
        assert!(qm.n_ch * qm.n_mlp >= qm.flat_len());
        let branch = qm.model.quantum().unwrap();
        let theta_full = branch.full_theta(&qm.pset, &[]).unwrap();
        let probs = branch.distribution(&theta_full, 7).unwrap();
        let order: Vec<usize> = (0..3).collect();
        let flat = generate_chunk_values(&qm, Some(&probs), &order).unwrap();
        assert_eq!(flat.len(), 16);
        let (a, b) = assemble_ab(&qm, &flat).unwrap();
        assert_eq!(a.shape(), &[2, 3]);
        assert_eq!(b.shape(), &[5, 2]);
        // The dropped tail must not influence the kept prefix.
        let full_last = qm
            .model
            .g
            .apply_basis_values(&qm.pset, &qm.bits[2], probs[2])
            .unwrap();
        assert_eq!(full_last.len(), 6);
    }

    #[test]
    fn tape_and_value_generation_agree() {
        let qm = build_qpa(&small_config(Variant::HpqsFinite), 5).unwrap();
        let branch = qm.model.quantum().unwrap();
        let theta_full = branch.full_theta(&qm.pset, &[]).unwrap();
        let probs = branch.distribution(&theta_full, 55).unwrap();
        let order: Vec<usize> = (0..qm.n_ch).collect();
        let by_value = generate_chunk_values(&qm, Some(&probs), &order).unwrap();
        let mut tape = Tape::new();
        let bind = qm.pset.bind(&mut tape).unwrap();
        let (flat, q_nodes) = generate_on_tape(&qm, &mut tape, &bind, Some(&probs)).unwrap();
        assert_eq!(q_nodes.len(), 8);
        let on_tape = tape.value(flat).data();
        assert_eq!(on_tape.len(), by_value.len());
        for (x, y) in by_value.iter().zip(on_tape) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn one_classical_step_strictly_decreases_loss() {
        let mut qm = build_qpa(&small_config(Variant::Nqs), 6).unwrap();
        let before = eval_loss(&qm, 6, 0).unwrap();
        let mut tape = Tape::new();
        let bind = qm.pset.bind(&mut tape).unwrap();
        let (flat, _) = generate_on_tape(&qm, &mut tape, &bind, None).unwrap();
        let ak = qm.rank * qm.k;
        let a_flat = tape.slice(flat, 0, ak).unwrap();
        let a_mat = tape.reshape(a_flat, vec![qm.rank, qm.k]).unwrap();
        let b_flat = tape.slice(flat, ak, qm.d * qm.rank).unwrap();
        let b_mat = tape.reshape(b_flat, vec![qm.d, qm.rank]).unwrap();
        let y = lora_forward(&mut tape, &qm.w0, a_mat, b_mat, &qm.probe).unwrap();
        let tn = tape.constant(qm.target.clone()).unwrap();
        let loss = tape.mse_loss(y, tn).unwrap();
        tape.backward(loss).unwrap();
        qm.pset.absorb_grads(&tape, &bind);
        qm.model.finalize_step_grads(&mut qm.pset);
        let mut opt = Optimizer::sgd(1e-3);
        opt.step(&mut qm.pset).unwrap();
        let after = eval_loss(&qm, 6, 0).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn run_is_deterministic_and_tracks_shots() {
        let config = small_config(Variant::HpqsFinite);
        let m1 = run_qpa(&config, 9).unwrap();
        let m2 = run_qpa(&config, 9).unwrap();
        assert_eq!(m1.epochs[0].loss, m2.epochs[0].loss);
        assert_eq!(m1.n_shot, Some(80)); // 10 x 2^3
        assert_eq!(m1.trainable_count, 15321);
        assert!(m1.initial_loss.unwrap().is_finite());
        assert!(m1.epochs[0].accuracy.is_none());
    }
}
