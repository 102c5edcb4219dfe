//! Named parameter store and first-order optimizers.
//!
//! Parameters live outside any tape. Each training step binds them onto a
//! fresh tape, runs forward/backward, then absorbs the tape gradients back
//! before the optimizer consumes them.

use super::tape::{Tape, TensorId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
}

/// Registration-ordered parameter collection.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

/// Maps every [`ParamId`] to its leaf on one particular tape.
pub struct TapeBinding {
    ids: Vec<TensorId>,
}

impl TapeBinding {
    pub fn id(&self, p: ParamId) -> TensorId {
        self.ids[p.0]
    }

    /// Binding from explicit leaves in registration order; mainly for
    /// gradient checking against a standalone parameter set.
    pub fn from_ids(ids: Vec<TensorId>) -> Self {
        TapeBinding { ids }
    }
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Param { name: name.into(), value, grad: None });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn grad(&self, id: ParamId) -> Option<&[f64]> {
        self.params[id.0].grad.as_ref().map(Tensor::data)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total scalar count across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Create one requires-grad leaf per parameter on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Result<TapeBinding> {
        let mut ids = Vec::with_capacity(self.params.len());
        for p in &self.params {
            ids.push(tape.leaf(p.value.clone(), true)?);
        }
        Ok(TapeBinding { ids })
    }

    /// Pull tape gradients back into the parameter gradient buffers
    /// (accumulating; parameters untouched by the pass keep their state).
    pub fn absorb_grads(&mut self, tape: &Tape, binding: &TapeBinding) {
        for (i, p) in self.params.iter_mut().enumerate() {
            if let Some(g) = tape.grad(binding.ids[i]) {
                let buf = p
                    .grad
                    .get_or_insert_with(|| Tensor::zeros(p.value.shape().to_vec()));
                for (dst, src) in buf.data_mut().iter_mut().zip(g) {
                    *dst += src;
                }
            }
        }
    }

    /// Add a raw gradient vector to one parameter.
    pub fn add_grad(&mut self, id: ParamId, grad: &[f64]) -> Result<()> {
        let p = &mut self.params[id.0];
        if grad.len() != p.value.numel() {
            return Err(Error::shape(
                "add_grad",
                format!("{} values for parameter {} of size {}", grad.len(), p.name, p.value.numel()),
            ));
        }
        let buf = p
            .grad
            .get_or_insert_with(|| Tensor::zeros(p.value.shape().to_vec()));
        for (dst, src) in buf.data_mut().iter_mut().zip(grad) {
            *dst += src;
        }
        Ok(())
    }

    /// Mark a parameter as having an all-zero gradient this step.
    pub fn note_zero_grad(&mut self, id: ParamId) {
        let p = &mut self.params[id.0];
        p.grad.get_or_insert_with(|| Tensor::zeros(p.value.shape().to_vec()));
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Registration-ordered (name, scalar count) listing.
    pub fn describe(&self) -> Vec<(String, usize)> {
        self.params.iter().map(|p| (p.name.clone(), p.value.numel())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
    AdamW,
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// SGD / Adam / AdamW with shared hyperparameter block.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    moments: Vec<Option<Moments>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Optimizer::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Optimizer::new(OptimizerKind::Adam, lr)
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        let mut o = Optimizer::new(OptimizerKind::AdamW, lr);
        o.weight_decay = weight_decay;
        o
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update. Every parameter must carry a populated gradient;
    /// gradients are consumed (reset to None) on success.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for (i, p) in params.params.iter().enumerate() {
            if p.grad.is_none() {
                return Err(Error::MissingGradient { index: i, name: p.name.clone() });
            }
            if let Some(g) = &p.grad {
                if !g.all_finite() {
                    return Err(Error::NonFinite { op: "optimizer_step" });
                }
            }
        }
        self.step += 1;
        if self.moments.len() < params.params.len() {
            self.moments.resize(params.params.len(), None);
        }
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for (i, p) in params.params.iter_mut().enumerate() {
            let grad = p.grad.take().expect("checked above");
            let g = grad.data();
            let w = p.value.data_mut();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (wv, gv) in w.iter_mut().zip(g) {
                        *wv -= self.lr * gv;
                    }
                }
                OptimizerKind::Adam | OptimizerKind::AdamW => {
                    let mom = self.moments[i].get_or_insert_with(|| Moments {
                        m: vec![0.0; w.len()],
                        v: vec![0.0; w.len()],
                    });
                    for j in 0..w.len() {
                        mom.m[j] = self.beta1 * mom.m[j] + (1.0 - self.beta1) * g[j];
                        mom.v[j] = self.beta2 * mom.v[j] + (1.0 - self.beta2) * g[j] * g[j];
                        let mh = mom.m[j] / bc1;
                        let vh = mom.v[j] / bc2;
                        let mut upd = self.lr * mh / (vh.sqrt() + self.eps);
                        if self.kind == OptimizerKind::AdamW {
                            upd += self.lr * self.weight_decay * w[j];
                        }
                        w[j] -= upd;
                    }
                }
            }
            if !p.value.all_finite() {
                return Err(Error::NonFinite { op: "optimizer_step" });
            }
        }
        Ok(())
    }
}
