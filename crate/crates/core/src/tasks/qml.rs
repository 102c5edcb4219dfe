//! Expectation-based two-class image classification.
//!
//! Pipeline: 28x28 image -> 4x4 average pooling -> 16 features -> angle
//! encoding -> four-qubit circuit with a trainable tail. The quantum side is
//! read out as grouped-Z softmax probabilities; the classical side is a
//! small network with a trainable affine logit shaping. Variants toggle the
//! blend: pure quantum (exact or finite shots), pure classical, or hybrid.

use crate::autodiff::{Optimizer, ParamSet, Tape, Tensor};
use crate::error::{Error, Result};
use crate::hybrid::{
    ClassicalBranch, ClassicalMode, HpqsModel, Postprocessor, QuantumBranch, ReadoutMode, ShotMode,
};
use crate::nqs::NqsNetwork;
use crate::quantum::ansatz::{qml_circuit, QmlCircuit, QML_QUBITS};
use crate::quantum::parameter_shift_grad_slots;
use crate::rng::derive_seed;
use crate::shots::{NoisePreset, ShotBudget};
use crate::tasks::data::{shuffled_indices, ImageSet};
use crate::tasks::{EpochRecord, RunMetrics, Variant};

#[derive(Debug, Clone)]
pub struct QmlConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub shot_multiplier: f64,
    pub noise: NoisePreset,
    pub var_layers: usize,
    pub nqs_hidden: usize,
}

impl Default for QmlConfig {
    fn default() -> Self {
        QmlConfig {
            variant: Variant::HpqsFinite,
            epochs: 5,
            lr: 5e-3,
            batch_size: 32,
            lambda: 0.1,
            shot_multiplier: 20.0,
            noise: NoisePreset::ideal(),
            var_layers: 5,
            nqs_hidden: 1,
        }
    }
}

pub struct QmlModel {
    pub pset: ParamSet,
    pub model: HpqsModel,
    pub circuit: QmlCircuit,
}

pub fn build_qml(config: &QmlConfig, seed: u64) -> Result<QmlModel> {
    let qc = qml_circuit(config.var_layers)?;
    let mut pset = ParamSet::new();
    let lambda = match config.variant {
        Variant::PqcExact | Variant::PqcFinite => 1.0,
        Variant::Nqs => 0.0,
        Variant::HpqsFinite => config.lambda,
    };
    let quantum = if lambda > 0.0 {
        let theta = pset.register(
            "theta",
            Tensor::uniform(
                vec![qc.n_var_slots],
                -0.1 * std::f64::consts::PI,
                0.1 * std::f64::consts::PI,
                &mut crate::rng::stream(seed, "theta-init", &[]),
            ),
        );
        let shots = match config.variant {
            Variant::PqcExact => ShotMode::Exact,
            _ => ShotMode::Finite(ShotBudget::from_multiplier(config.shot_multiplier, QML_QUBITS)?),
        };
        Some(QuantumBranch {
            circuit: qc.circuit.clone(),
            theta,
            trainable_from: qc.n_encoder_slots,
            shots,
            noise: config.noise.clone(),
            readout: ReadoutMode::Expectation,
        })
    } else {
        None
    };
    let (classical, h) = if lambda < 1.0 {
        let net = NqsNetwork::classifier(
            &mut pset,
            "gamma",
            16,
            config.nqs_hidden,
            2,
            derive_seed(seed, "nqs-seed", &[]),
        )?;
        let scale = pset.register("h.scale", Tensor::new(vec![2], vec![1.0, 1.0])?);
        let shift = pset.register("h.shift", Tensor::new(vec![2], vec![0.0, 0.0])?);
        (
            Some(ClassicalBranch { net, mode: ClassicalMode::Logits }),
            Postprocessor::Affine { scale, shift },
        )
    } else {
        (None, Postprocessor::Identity)
    };
    let g = Postprocessor::QubitGroupSoftmax { groups: vec![vec![0, 1], vec![2, 3]] };
    let model = HpqsModel::new(lambda, quantum, classical, g, h)?;
    Ok(QmlModel { pset, model, circuit: qc })
}

/// Per-example basis distributions for one batch, sampled (or exact) with
/// seeds derived from `tag`.
fn batch_distributions(
    qm: &QmlModel,
    features: &Tensor,
    seed: u64,
    tag: &str,
    indices: &[u64],
) -> Result<Tensor> {
    let branch = qm.model.quantum()?;
    let b = features.shape()[0];
    let mut data = Vec::with_capacity(b * 16);
    for row in 0..b {
        let feats = &features.data()[row * 16..(row + 1) * 16];
        let angles = qm.circuit.angles(feats)?;
        let theta_full = branch.full_theta(&qm.pset, &angles)?;
        let mut idx = indices.to_vec();
        idx.push(row as u64);
        let probs = branch.distribution(&theta_full, derive_seed(seed, tag, &idx))?;
        data.extend_from_slice(&probs);
    }
    Tensor::new(vec![b, 16], data)
}

/// Parameter-shift gradient of the loss through the sampled quantum branch:
/// the tape supplies the cotangent at the post-readout node; every shifted
/// evaluation redraws shots from its own derived seed.
fn accumulate_theta_grad(
    qm: &mut QmlModel,
    features: &Tensor,
    cotangent: &[f64],
    seed: u64,
    step_index: &[u64],
) -> Result<()> {
    let branch = qm.model.quantum()?.clone();
    let slots: Vec<usize> = branch.trainable_slots().collect();
    let b = features.shape()[0];
    let mut total = vec![0.0; slots.len()];
    for row in 0..b {
        let feats = &features.data()[row * 16..(row + 1) * 16];
        let angles = qm.circuit.angles(feats)?;
        let theta_full = branch.full_theta(&qm.pset, &angles)?;
        let ct = &cotangent[row * 2..(row + 1) * 2];
        let g = &qm.model.g;
        let pset = &qm.pset;
        let grad_full = parameter_shift_grad_slots(&theta_full, &slots, |theta_p, ev| {
            let mut idx = step_index.to_vec();
            idx.extend([row as u64, ev.slot as u64, u64::from(ev.sign > 0)]);
            let probs = branch.distribution(theta_p, derive_seed(seed, "shift", &idx))?;
            let out = g.apply_vector_values(pset, &probs)?;
            Ok(out.iter().zip(ct).map(|(o, c)| o * c).sum())
        })?;
        for (t, &slot) in total.iter_mut().zip(&slots) {
            *t += grad_full[slot];
        }
    }
    let theta = qm.model.quantum()?.theta;
    qm.pset.add_grad(theta, &total)
}

/// Held-out accuracy under the model's own readout mode (finite variants
/// stay finite at evaluation time).
pub fn evaluate_accuracy(qm: &QmlModel, data: &ImageSet, features: &Tensor, seed: u64, epoch: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::dataset("memory", "empty evaluation set"));
    }
    let mut correct = 0usize;
    let chunk = 64;
    let n = data.len();
    let mut at = 0;
    while at < n {
        let hi = (at + chunk).min(n);
        let idx: Vec<usize> = (at..hi).collect();
        let rows = data.feature_batch(features, &idx)?;
        let probs = if qm.model.uses_quantum() {
            Some(batch_distributions(qm, &rows, seed, "eval", &[epoch as u64, at as u64])?)
        } else {
            None
        };
        let mut tape = Tape::new();
        let bind = qm.pset.bind(&mut tape)?;
        let out = qm.model.expectation_predict_batch(&mut tape, &bind, &rows, probs.as_ref())?;
        let vals = tape.value(out.out).data();
        for (row, &i) in idx.iter().enumerate() {
            let pred = usize::from(vals[row * 2 + 1] > vals[row * 2]);
            if pred == data.labels()[i] {
                correct += 1;
            }
        }
        at = hi;
    }
    Ok(correct as f64 / n as f64)
}

pub fn run_qml(
    config: &QmlConfig,
    train: &ImageSet,
    test: &ImageSet,
    seed: u64,
) -> Result<RunMetrics> {
    config.noise.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::dataset("memory", "empty training or test split"));
    }
    let mut qm = build_qml(config, seed)?;
    let train_features = train.features16();
    let test_features = test.features16();
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
            let rows = train.feature_batch(&train_features, batch)?;
            let targets = train.label_batch(batch);
            let probs = if qm.model.uses_quantum() {
                Some(batch_distributions(&qm, &rows, seed, "train-sample", &[epoch as u64, step as u64])?)
            } else {
                None
            };
            let mut tape = Tape::new();
            let bind = qm.pset.bind(&mut tape)?;
            let out = qm.model.expectation_predict_batch(&mut tape, &bind, &rows, probs.as_ref())?;
            let loss = tape.nll_loss(out.out, &targets)?;
            loss_sum += tape.value(loss).item()?;
            batches += 1;
            tape.backward(loss)?;
            qm.pset.absorb_grads(&tape, &bind);
            if let Some(q_out) = out.q_out {
                let ct = tape
                    .grad(q_out)
                    .ok_or_else(|| Error::Internal("missing quantum cotangent".to_string()))?
                    .to_vec();
                accumulate_theta_grad(&mut qm, &rows, &ct, seed, &[epoch as u64, step as u64])?;
            }
            qm.model.finalize_step_grads(&mut qm.pset);
            opt.step(&mut qm.pset)?;
        }
        let accuracy = evaluate_accuracy(&qm, test, &test_features, seed, epoch)?;
        epochs.push(EpochRecord { loss: loss_sum / batches.max(1) as f64, accuracy: Some(accuracy) });
    }
    Ok(RunMetrics { epochs, trainable_count: trainable, n_shot, initial_loss: None })
}
