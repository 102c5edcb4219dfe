//! Target-network parameter generation ("quantum-train" style): a PQC over
//! n = ceil(log2 m) qubits is sampled once per step, decoders turn each
//! basis state's probability (and a classical per-basis value) into one
//! generated weight, and the blended vector instantiates a CNN whose
//! cross-entropy on the image batch is the training loss.

use crate::autodiff::{Optimizer, ParamSet, Tape, Tensor, TensorId};
use crate::error::{Error, Result};
use crate::hybrid::{
    ClassicalBranch, ClassicalMode, HpqsModel, Postprocessor, QuantumBranch, ReadoutMode, ShotMode,
};
use crate::mps::MpsDecoder;
use crate::nqs::{bits_of, NqsNetwork};
use crate::quantum::ansatz::{qt_ansatz, qubits_for_states};
use crate::quantum::{parameter_shift_grad_slots, MAX_QUBITS};
use crate::rng::derive_seed;
use crate::shots::{NoisePreset, ShotBudget};
use crate::tasks::data::{shuffled_indices, ImageSet};
use crate::tasks::target::{qt_desk_cnn, qt_full_cnn, TargetSpec};
use crate::tasks::{EpochRecord, RunMetrics, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QtTarget {
    Full,
    Desk,
}

#[derive(Debug, Clone)]
pub struct QtConfig {
    pub variant: Variant,
    pub target: QtTarget,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub shot_multiplier: f64,
    pub noise: NoisePreset,
    pub ansatz_layers: usize,
    pub nqs_hidden: usize,
    pub bond_g: usize,
    pub bond_h: usize,
    /// Init scale of the decoder output legs = magnitude the generated CNN
    /// weights start at. Kaiming-ish for the 5x5-conv / narrow-fc targets.
    pub decoder_scale: f64,
}

impl Default for QtConfig {
    fn default() -> Self {
        QtConfig {
            variant: Variant::HpqsFinite,
            target: QtTarget::Full,
            epochs: 50,
            lr: 1e-4,
            batch_size: 64,
            lambda: 0.5,
            shot_multiplier: 10.0,
            noise: NoisePreset::ideal(),
            ansatz_layers: 1,
            nqs_hidden: 32,
            bond_g: 2,
            bond_h: 1,
            decoder_scale: 0.15,
        }
    }
}

impl QtConfig {
    /// Reduced instance sized for seconds-scale runs.
    pub fn desk() -> Self {
        QtConfig {
            target: QtTarget::Desk,
            epochs: 10,
            lr: 1.5e-3,
            batch_size: 100,
            ..QtConfig::default()
        }
    }
}

pub struct QtModel {
    pub pset: ParamSet,
    pub model: HpqsModel,
    pub spec: TargetSpec,
    pub m: usize,
    pub n_qubits: usize,
    bits: Vec<Vec<f64>>,
}

pub fn build_qt(config: &QtConfig, seed: u64) -> Result<QtModel> {
    let spec = match config.target {
        QtTarget::Full => qt_full_cnn(),
        QtTarget::Desk => qt_desk_cnn(),
    };
    build_qt_with_spec(config, spec, seed)
}

pub fn build_qt_with_spec(config: &QtConfig, spec: TargetSpec, seed: u64) -> Result<QtModel> {
    let m = spec.param_count();
    let n = qubits_for_states(m)?;
    if n > MAX_QUBITS {
        return Err(Error::invalid(
            "qt_task",
            format!("{m} target parameters need {n} qubits, above the {MAX_QUBITS}-qubit ceiling"),
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
        Postprocessor::Decoder(MpsDecoder::with_scale(
            &mut pset,
            "g",
            n + 1,
            config.bond_g,
            1,
            derive_seed(seed, "g-init", &[]),
            config.decoder_scale,
        )?)
    } else {
        Postprocessor::Identity
    };
    let h = if lambda < 1.0 {
        Postprocessor::Decoder(MpsDecoder::with_scale(
            &mut pset,
            "h",
            n + 1,
            config.bond_h,
            1,
            derive_seed(seed, "h-init", &[]),
            config.decoder_scale,
        )?)
    } else {
        Postprocessor::Identity
    };
    let model = HpqsModel::new(lambda, quantum, classical, g, h)?;
    let bits = (0..m)
        .map(|i| bits_of(i, n).iter().map(|&b| f64::from(b)).collect())
        .collect();
    Ok(QtModel { pset, model, spec, m, n_qubits: n, bits })
}

/// First-m basis rows as network input.
fn basis_rows(qm: &QtModel) -> Result<Tensor> {
    let mut data = Vec::with_capacity(qm.m * qm.n_qubits);
    for b in &qm.bits {
        data.extend_from_slice(b);
    }
    Tensor::new(vec![qm.m, qm.n_qubits], data)
}

/// On-tape generation of the flat vector `a` plus the per-index post-G
/// nodes (cotangent read points).
fn generate_on_tape(
    qm: &QtModel,
    tape: &mut Tape,
    bind: &crate::autodiff::TapeBinding,
    probs: Option<&[f64]>,
) -> Result<(TensorId, Vec<TensorId>)> {
    let probs_leaf = if qm.model.uses_quantum() {
        let p = probs.ok_or_else(|| Error::Internal("quantum variant without a sample".to_string()))?;
        if p.len() != 1 << qm.n_qubits {
            return Err(Error::shape("qt_generate", format!("{} probabilities for {} qubits", p.len(), qm.n_qubits)));
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
    let mut a_parts = Vec::with_capacity(qm.m);
    for i in 0..qm.m {
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
        a_parts.push(qm.model.blend(tape, q_i, c_i)?);
    }
    let a = tape.concat(&a_parts)?;
    Ok((a, q_nodes))
}

/// Value-space generation for evaluation.
pub fn generate_values(qm: &QtModel, probs: Option<&[f64]>) -> Result<Vec<f64>> {
    let values = if qm.model.uses_classical() {
        let rows = basis_rows(qm)?;
        let mut tape = Tape::new();
        let bind = qm.pset.bind(&mut tape)?;
        let v = qm.model.classical()?.net.value_batch(&mut tape, &bind, &rows)?;
        Some(tape.value(v).data().to_vec())
    } else {
        None
    };
    let mut a = Vec::with_capacity(qm.m);
    for i in 0..qm.m {
        let q = match probs {
            Some(p) if qm.model.uses_quantum() => {
                Some(qm.model.g.apply_basis_values(&qm.pset, &qm.bits[i], p[i])?)
            }
            None if !qm.model.uses_quantum() => None,
            _ => return Err(Error::Internal("sample presence mismatch".to_string())),
        };
        let c = values.as_ref().map(|v| qm.model.h.apply_basis_values(&qm.pset, &qm.bits[i], v[i])).transpose()?;
        a.push(qm.model.blend_values(q.as_deref(), c.as_deref())?[0]);
    }
    Ok(a)
}

/// Per-index affine coefficients of the G decoder in its value-site input:
/// G(bits_i, v) = alpha_i * v + beta_i. Shifted readouts then reduce to a
/// dot product with the freshly sampled distribution.
fn linearize_g(qm: &QtModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut alpha = Vec::with_capacity(qm.m);
    let mut beta = Vec::with_capacity(qm.m);
    for i in 0..qm.m {
        let at0 = qm.model.g.apply_basis_values(&qm.pset, &qm.bits[i], 0.0)?[0];
        let at1 = qm.model.g.apply_basis_values(&qm.pset, &qm.bits[i], 1.0)?[0];
        alpha.push(at1 - at0);
        beta.push(at0);
    }
    Ok((alpha, beta))
}

fn accumulate_theta_grad(qm: &mut QtModel, cotangent: &[f64], seed: u64, step_index: &[u64]) -> Result<()> {
    let branch = qm.model.quantum()?.clone();
    let theta_full = branch.full_theta(&qm.pset, &[])?;
    let slots: Vec<usize> = branch.trainable_slots().collect();
    let (alpha, beta) = linearize_g(qm)?;
    let offset: f64 = cotangent.iter().zip(&beta).map(|(c, b)| c * b).sum();
    let weights: Vec<f64> = cotangent.iter().zip(&alpha).map(|(c, a)| c * a).collect();
    let grad_full = parameter_shift_grad_slots(&theta_full, &slots, |theta_p, ev| {
        let mut idx = step_index.to_vec();
        idx.extend([ev.slot as u64, u64::from(ev.sign > 0)]);
        let probs = branch.distribution(theta_p, derive_seed(seed, "shift", &idx))?;
        Ok(offset + weights.iter().zip(&probs).map(|(w, p)| w * p).sum::<f64>())
    })?;
    let theta = qm.model.quantum()?.theta;
    qm.pset.add_grad(theta, &grad_full)
}

/// Accuracy of the instantiated network over a whole set, in chunks.
pub fn evaluate_accuracy(qm: &QtModel, a: &[f64], data: &ImageSet) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::dataset("memory", "empty evaluation set"));
    }
    let mut correct = 0usize;
    let chunk = 200;
    let mut at = 0;
    while at < data.len() {
        let hi = (at + chunk).min(data.len());
        let idx: Vec<usize> = (at..hi).collect();
        let images = data.image_batch(&idx)?;
        let mut tape = Tape::new();
        let an = tape.constant(Tensor::new(vec![a.len()], a.to_vec())?)?;
        let logits = qm.spec.forward(&mut tape, an, &images)?;
        let vals = tape.value(logits).data();
        let classes = tape.value(logits).shape()[1];
        for (row, &i) in idx.iter().enumerate() {
            let r = &vals[row * classes..(row + 1) * classes];
            let pred = r
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.partial_cmp(y.1).expect("finite logits"))
                .map(|(j, _)| j)
                .expect("nonempty row");
            if pred == data.labels()[i] {
                correct += 1;
            }
        }
        at = hi;
    }
    Ok(correct as f64 / data.len() as f64)
}

/// One fresh evaluation-time generation (finite variants resample with the
/// derived evaluation seed).
pub fn generate_for_eval(qm: &QtModel, seed: u64, epoch: usize) -> Result<Vec<f64>> {
    let probs = if qm.model.uses_quantum() {
        let branch = qm.model.quantum()?;
        let theta_full = branch.full_theta(&qm.pset, &[])?;
        Some(branch.distribution(&theta_full, derive_seed(seed, "eval", &[epoch as u64]))?)
    } else {
        None
    };
    generate_values(qm, probs.as_deref())
}

pub fn run_qt(config: &QtConfig, train: &ImageSet, test: &ImageSet, seed: u64) -> Result<RunMetrics> {
    config.noise.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::dataset("memory", "empty training or test split"));
    }
    let mut qm = build_qt(config, seed)?;
    let mut opt = Optimizer::adam(config.lr);
    let (_, trainable) = qm.model.registry_trainables(&qm.pset);
    let n_shot = match qm.model.quantum.as_ref().map(|q| q.shots) {
        Some(ShotMode::Finite(b)) => Some(b.n_shot),
        _ => None,
    };
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = shuffled_indices(train.len(), seed, epoch);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let probs = if qm.model.uses_quantum() {
                let branch = qm.model.quantum()?;
                let theta_full = branch.full_theta(&qm.pset, &[])?;
                Some(branch.distribution(&theta_full, derive_seed(seed, "train-sample", &[epoch as u64, step as u64]))?)
            } else {
                None
            };
            let images = train.image_batch(batch)?;
            let targets = train.label_batch(batch);
            let mut tape = Tape::new();
            let bind = qm.pset.bind(&mut tape)?;
            let (a, q_nodes) = generate_on_tape(&qm, &mut tape, &bind, probs.as_deref())?;
            let logits = qm.spec.forward(&mut tape, a, &images)?;
            let sm = tape.softmax(logits)?;
            let loss = tape.nll_loss(sm, &targets)?;
            loss_sum += tape.value(loss).item()?;
            batches += 1;
            tape.backward(loss)?;
            qm.pset.absorb_grads(&tape, &bind);
            if !q_nodes.is_empty() {
                let mut ct = Vec::with_capacity(q_nodes.len());
                for &node in &q_nodes {
                    ct.push(
                        tape.grad(node)
                            .ok_or_else(|| Error::Internal("missing quantum cotangent".to_string()))?[0],
                    );
                }
                accumulate_theta_grad(&mut qm, &ct, seed, &[epoch as u64, step as u64])?;
            }
            qm.model.finalize_step_grads(&mut qm.pset);
            opt.step(&mut qm.pset)?;
        }
        let a = generate_for_eval(&qm, seed, epoch)?;
        let accuracy = evaluate_accuracy(&qm, &a, test)?;
        epochs.push(EpochRecord { loss: loss_sum / batches.max(1) as f64, accuracy: Some(accuracy) });
    }
    Ok(RunMetrics { epochs, trainable_count: trainable, n_shot, initial_loss: None })
}
