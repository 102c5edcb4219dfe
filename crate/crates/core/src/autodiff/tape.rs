//! Define-by-run reverse-mode tape.
//!
//! Nodes live in an arena indexed by [`TensorId`]; each op records the rule
//! needed to push adjoints back to its inputs. All math is f64 and any
//! non-finite forward value is a hard error. `backward` walks records in
//! reverse creation order exactly once; repeated calls accumulate into the
//! persistent per-node gradients.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone)]
struct ConvDims {
    batch: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
}

#[derive(Debug, Clone)]
enum Rule {
    Leaf,
    Add { a: TensorId, b: TensorId, bias: bool },
    AddScalar { a: TensorId },
    Mul { a: TensorId, b: TensorId },
    Scale { a: TensorId, c: f64 },
    SMul { s: TensorId, x: TensorId },
    DivScalar { x: TensorId, s: TensorId },
    Matmul { a: TensorId, b: TensorId, m: usize, k: usize, n: usize },
    Transpose { a: TensorId, r: usize, c: usize },
    Relu { a: TensorId },
    Softplus { a: TensorId },
    Sigmoid { a: TensorId },
    Log { a: TensorId },
    Softmax { a: TensorId, rows: usize, cols: usize },
    Sum { a: TensorId },
    Mean { a: TensorId },
    Reshape { a: TensorId },
    Concat { parts: Vec<TensorId> },
    Slice { a: TensorId, start: usize },
    GatherScalar { a: TensorId, index: usize },
    Conv2d { x: TensorId, w: TensorId, b: TensorId, dims: ConvDims },
    AvgPool2d { x: TensorId, k: usize, c_in_hw: (usize, usize, usize, usize) },
    NllLoss { probs: TensorId, targets: Vec<usize> },
    MseLoss { pred: TensorId, target: TensorId },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    rule: Rule,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Stable sigmoid.
fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable softplus ln(1 + e^x).
fn softplus_scalar(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: &'static str, value: Tensor, requires_grad: bool, rule: Rule) -> Result<TensorId> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op });
        }
        self.nodes.push(Node { value, requires_grad, grad: None, rule });
        Ok(TensorId(self.nodes.len() - 1))
    }

    fn node(&self, id: TensorId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.node(id).value
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.node(id).requires_grad
    }

    /// Accumulated gradient of a node, if any backward pass reached it.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.node(id).grad.as_deref()
    }

    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<TensorId> {
        self.push("leaf", value, requires_grad, Rule::Leaf)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<TensorId> {
        self.leaf(value, false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Result<TensorId> {
        self.constant(Tensor::scalar(v))
    }

    fn rg2(&self, a: TensorId, b: TensorId) -> bool {
        self.node(a).requires_grad || self.node(b).requires_grad
    }

    /// Elementwise add; also broadcasts a 1-D bias across the rows of a 2-D lhs.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (&self.node(a).value, &self.node(b).value);
        if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
            let value = Tensor::new(va.shape().to_vec(), data)?;
            return self.push("add", value, self.rg2(a, b), Rule::Add { a, b, bias: false });
        }
        if va.shape().len() == 2 && vb.shape().len() == 1 && va.shape()[1] == vb.shape()[0] {
            let cols = vb.shape()[0];
            let data = va
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| x + vb.data()[i % cols])
                .collect();
            let value = Tensor::new(va.shape().to_vec(), data)?;
            return self.push("add", value, self.rg2(a, b), Rule::Add { a, b, bias: true });
        }
        Err(Error::shape("add", format!("{:?} vs {:?}", va.shape(), vb.shape())))
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let va = &self.node(a).value;
        let data = va.data().iter().map(|x| x + c).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push("add_scalar", value, self.node(a).requires_grad, Rule::AddScalar { a })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (&self.node(a).value, &self.node(b).value);
        if va.shape() != vb.shape() {
            return Err(Error::shape("mul", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push("mul", value, self.rg2(a, b), Rule::Mul { a, b })
    }

    /// Multiply by an f64 constant.
    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let va = &self.node(a).value;
        let data = va.data().iter().map(|x| x * c).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push("scale", value, self.node(a).requires_grad, Rule::Scale { a, c })
    }

    /// Multiply a tensor by a one-element tape scalar.
    pub fn smul(&mut self, s: TensorId, x: TensorId) -> Result<TensorId> {
        let sv = self.node(s).value.item().map_err(|_| {
            Error::shape("smul", format!("scalar operand has shape {:?}", self.node(s).value.shape()))
        })?;
        let vx = &self.node(x).value;
        let data = vx.data().iter().map(|v| v * sv).collect();
        let value = Tensor::new(vx.shape().to_vec(), data)?;
        self.push("smul", value, self.rg2(s, x), Rule::SMul { s, x })
    }

    /// Divide a tensor by a one-element tape scalar.
    pub fn div_scalar(&mut self, x: TensorId, s: TensorId) -> Result<TensorId> {
        let sv = self.node(s).value.item().map_err(|_| {
            Error::shape("div_scalar", format!("scalar operand has shape {:?}", self.node(s).value.shape()))
        })?;
        let vx = &self.node(x).value;
        let data = vx.data().iter().map(|v| v / sv).collect();
        let value = Tensor::new(vx.shape().to_vec(), data)?;
        self.push("div_scalar", value, self.rg2(x, s), Rule::DivScalar { x, s })
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (va, vb) = (&self.node(a).value, &self.node(b).value);
        if va.shape().len() != 2 || vb.shape().len() != 2 || va.shape()[1] != vb.shape()[0] {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", va.shape(), vb.shape())));
        }
        let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = va.data()[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &vb.data()[p * n..(p + 1) * n];
                let orow = &mut data[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aip * brow[j];
                }
            }
        }
        let value = Tensor::new(vec![m, n], data)?;
        self.push("matmul", value, self.rg2(a, b), Rule::Matmul { a, b, m, k, n })
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.node(a).value;
        if va.shape().len() != 2 {
            return Err(Error::shape("transpose", format!("{:?}", va.shape())));
        }
        let (r, c) = (va.shape()[0], va.shape()[1]);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = va.data()[i * c + j];
            }
        }
        let value = Tensor::new(vec![c, r], data)?;
        self.push("transpose", value, self.node(a).requires_grad, Rule::Transpose { a, r, c })
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.node(a).value;
        let data = va.data().iter().map(|x| x.max(0.0)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push("relu", value, self.node(a).requires_grad, Rule::Relu { a })
    }

    pub fn softplus(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.node(a).value;
        let data = va.data().iter().map(|&x| softplus_scalar(x)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push("softplus", value, self.node(a).requires_grad, Rule::Softplus { a })
    }

    pub fn sigmoid(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.node(a).value;
        let data = va.data().iter().map(|&x| sigmoid_scalar(x)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push("sigmoid", value, self.node(a).requires_grad, Rule::Sigmoid { a })
    }

    /// Natural log with the argument clamped away from zero.
    pub fn log(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.node(a).value;
        let data = va.data().iter().map(|x| x.max(LOG_FLOOR).ln()).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push("log", value, self.node(a).requires_grad, Rule::Log { a })
    }

    /// Softmax over the last axis (whole vector for 1-D, per row for 2-D),
    /// computed with max subtraction.
    pub fn softmax(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.node(a).value;
        let (rows, cols) = match va.shape() {
            [c] => (1usize, *c),
            [r, c] => (*r, *c),
            s => return Err(Error::shape("softmax", format!("{:?}", s))),
        };
        if cols == 0 {
            return Err(Error::shape("softmax", "zero-width axis".to_string()));
        }
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &va.data()[r * cols..(r + 1) * cols];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (j, &x) in row.iter().enumerate() {
                let e = (x - mx).exp();
                data[r * cols + j] = e;
                denom += e;
            }
            for j in 0..cols {
                data[r * cols + j] /= denom;
            }
        }
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push("softmax", value, self.node(a).requires_grad, Rule::Softmax { a, rows, cols })
    }

    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        let total: f64 = self.node(a).value.data().iter().sum();
        self.push("sum", Tensor::scalar(total), self.node(a).requires_grad, Rule::Sum { a })
    }

    pub fn mean(&mut self, a: TensorId) -> Result<TensorId> {
        let va = &self.node(a).value;
        if va.numel() == 0 {
            return Err(Error::shape("mean", "empty tensor".to_string()));
        }
        let m = va.data().iter().sum::<f64>() / va.numel() as f64;
        self.push("mean", Tensor::scalar(m), self.node(a).requires_grad, Rule::Mean { a })
    }

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let value = self.node(a).value.reshaped(shape)?;
        self.push("reshape", value, self.node(a).requires_grad, Rule::Reshape { a })
    }

    /// Concatenate 1-D tensors into one vector.
    pub fn concat(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no inputs".to_string()));
        }
        let mut data = Vec::new();
        let mut rg = false;
        for &p in parts {
            let n = self.node(p);
            if n.value.shape().len() != 1 {
                return Err(Error::shape("concat", format!("non-1-D part {:?}", n.value.shape())));
            }
            data.extend_from_slice(n.value.data());
            rg |= n.requires_grad;
        }
        let value = Tensor::new(vec![data.len()], data)?;
        self.push("concat", value, rg, Rule::Concat { parts: parts.to_vec() })
    }

    /// Contiguous 1-D slice [start, start + len).
    pub fn slice(&mut self, a: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let va = &self.node(a).value;
        if va.shape().len() != 1 || start + len > va.numel() {
            return Err(Error::shape(
                "slice",
                format!("[{start}, {}) of {:?}", start + len, va.shape()),
            ));
        }
        let value = Tensor::new(vec![len], va.data()[start..start + len].to_vec())?;
        self.push("slice", value, self.node(a).requires_grad, Rule::Slice { a, start })
    }

    /// One element of a 1-D tensor as a scalar node.
    pub fn gather_scalar(&mut self, a: TensorId, index: usize) -> Result<TensorId> {
        let va = &self.node(a).value;
        if va.shape().len() != 1 || index >= va.numel() {
            return Err(Error::shape("gather_scalar", format!("index {index} of {:?}", va.shape())));
        }
        let value = Tensor::scalar(va.data()[index]);
        self.push("gather_scalar", value, self.node(a).requires_grad, Rule::GatherScalar { a, index })
    }

    /// Valid (no padding), stride-1 2-D convolution.
    /// x: [B, C_in, H, W], w: [C_out, C_in, k, k], b: [C_out].
    pub fn conv2d(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let (vx, vw, vb) = (&self.node(x).value, &self.node(w).value, &self.node(b).value);
        let (batch, c_in, h, wd) = match vx.shape() {
            [a, b, c, d] => (*a, *b, *c, *d),
            s => return Err(Error::shape("conv2d", format!("input {:?}", s))),
        };
        let (c_out, wc_in, k) = match vw.shape() {
            [o, i, k1, k2] if k1 == k2 => (*o, *i, *k1),
            s => return Err(Error::shape("conv2d", format!("weight {:?}", s))),
        };
        if wc_in != c_in || vb.shape() != [c_out] || h < k || wd < k {
            return Err(Error::shape(
                "conv2d",
                format!("x {:?}, w {:?}, b {:?}", vx.shape(), vw.shape(), vb.shape()),
            ));
        }
        let (ho, wo) = (h - k + 1, wd - k + 1);
        let mut data = vec![0.0; batch * c_out * ho * wo];
        for bi in 0..batch {
            for oc in 0..c_out {
                let bias = vb.data()[oc];
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = bias;
                        for ic in 0..c_in {
                            let xoff = ((bi * c_in + ic) * h + i) * wd + j;
                            let woff = (oc * c_in + ic) * k * k;
                            for u in 0..k {
                                let xrow = &vx.data()[xoff + u * wd..xoff + u * wd + k];
                                let wrow = &vw.data()[woff + u * k..woff + (u + 1) * k];
                                for v in 0..k {
                                    acc += xrow[v] * wrow[v];
                                }
                            }
                        }
                        data[((bi * c_out + oc) * ho + i) * wo + j] = acc;
                    }
                }
            }
        }
        let value = Tensor::new(vec![batch, c_out, ho, wo], data)?;
        let rg = self.node(x).requires_grad || self.node(w).requires_grad || self.node(b).requires_grad;
        let dims = ConvDims { batch, c_in, h, w: wd, c_out, k };
        self.push("conv2d", value, rg, Rule::Conv2d { x, w, b, dims })
    }

    /// Non-overlapping k x k average pooling. Spatial dims must divide by k.
    pub fn avg_pool2d(&mut self, x: TensorId, k: usize) -> Result<TensorId> {
        let vx = &self.node(x).value;
        let (batch, c, h, w) = match vx.shape() {
            [a, b, c, d] => (*a, *b, *c, *d),
            s => return Err(Error::shape("avg_pool2d", format!("{:?}", s))),
        };
        if k == 0 || h % k != 0 || w % k != 0 {
            return Err(Error::shape("avg_pool2d", format!("{h}x{w} not divisible by {k}")));
        }
        let (ho, wo) = (h / k, w / k);
        let inv = 1.0 / (k * k) as f64;
        let mut data = vec![0.0; batch * c * ho * wo];
        for bc in 0..batch * c {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = 0.0;
                    for u in 0..k {
                        let off = (bc * h + i * k + u) * w + j * k;
                        for v in 0..k {
                            acc += vx.data()[off + v];
                        }
                    }
                    data[(bc * ho + i) * wo + j] = acc * inv;
                }
            }
        }
        let value = Tensor::new(vec![batch, c, ho, wo], data)?;
        self.push("avg_pool2d", value, self.node(x).requires_grad, Rule::AvgPool2d { x, k, c_in_hw: (batch, c, h, w) })
    }

    /// Mean over the batch of -ln p[b, target_b]. `probs` rows should already
    /// be a distribution (for example softmax output).
    pub fn nll_loss(&mut self, probs: TensorId, targets: &[usize]) -> Result<TensorId> {
        let vp = &self.node(probs).value;
        let (rows, cols) = match vp.shape() {
            [r, c] => (*r, *c),
            s => return Err(Error::shape("nll_loss", format!("{:?}", s))),
        };
        if targets.len() != rows {
            return Err(Error::shape("nll_loss", format!("{} targets for {} rows", targets.len(), rows)));
        }
        let mut acc = 0.0;
        for (b, &t) in targets.iter().enumerate() {
            if t >= cols {
                return Err(Error::invalid("nll_loss", format!("target {t} out of range {cols}")));
            }
            acc -= vp.data()[b * cols + t].max(LOG_FLOOR).ln();
        }
        let value = Tensor::scalar(acc / rows as f64);
        self.push("nll_loss", value, self.node(probs).requires_grad, Rule::NllLoss { probs, targets: targets.to_vec() })
    }

    /// Mean squared error over all elements.
    pub fn mse_loss(&mut self, pred: TensorId, target: TensorId) -> Result<TensorId> {
        let (vp, vt) = (&self.node(pred).value, &self.node(target).value);
        if vp.shape() != vt.shape() {
            return Err(Error::shape("mse_loss", format!("{:?} vs {:?}", vp.shape(), vt.shape())));
        }
        let n = vp.numel();
        if n == 0 {
            return Err(Error::shape("mse_loss", "empty tensor".to_string()));
        }
        let acc: f64 = vp.data().iter().zip(vt.data()).map(|(p, t)| (p - t) * (p - t)).sum();
        let value = Tensor::scalar(acc / n as f64);
        self.push("mse_loss", value, self.rg2(pred, target), Rule::MseLoss { pred, target })
    }

    /// Reverse pass from a scalar loss. Adjoints of every `requires_grad`
    /// node are accumulated into its persistent gradient buffer.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        let ln = self.node(loss);
        if ln.value.numel() != 1 {
            return Err(Error::shape("backward", format!("loss shape {:?}", ln.value.shape())));
        }
        if !ln.requires_grad {
            return Err(Error::invalid("backward", "loss does not require grad".to_string()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { op: "backward" });
            }
            // Persist the adjoint on this node.
            {
                let node = &mut self.nodes[id];
                let store = node.grad.get_or_insert_with(|| vec![0.0; node.value.numel()]);
                for (s, v) in store.iter_mut().zip(&g) {
                    *s += v;
                }
            }
            let rule = self.nodes[id].rule.clone();
            self.push_adjoints(id, &rule, &g, &mut adj);
        }
        Ok(())
    }

    fn send(&self, adj: &mut [Option<Vec<f64>>], to: TensorId, contrib: impl FnOnce(&mut [f64])) {
        if !self.nodes[to.0].requires_grad {
            return;
        }
        let buf = adj[to.0].get_or_insert_with(|| vec![0.0; self.nodes[to.0].value.numel()]);
        contrib(buf);
    }

    fn push_adjoints(&self, out: usize, rule: &Rule, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        match rule {
            Rule::Leaf => {}
            Rule::Add { a, b, bias } => {
                self.send(adj, *a, |buf| {
                    for (s, v) in buf.iter_mut().zip(g) {
                        *s += v;
                    }
                });
                if *bias {
                    let cols = self.nodes[b.0].value.numel();
                    self.send(adj, *b, |buf| {
                        for (i, v) in g.iter().enumerate() {
                            buf[i % cols] += v;
                        }
                    });
                } else {
                    self.send(adj, *b, |buf| {
                        for (s, v) in buf.iter_mut().zip(g) {
                            *s += v;
                        }
                    });
                }
            }
            Rule::AddScalar { a } => self.send(adj, *a, |buf| {
                for (s, v) in buf.iter_mut().zip(g) {
                    *s += v;
                }
            }),
            Rule::Mul { a, b } => {
                let (va, vb) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                self.send(adj, *a, |buf| {
                    for i in 0..g.len() {
                        buf[i] += g[i] * vb[i];
                    }
                });
                self.send(adj, *b, |buf| {
                    for i in 0..g.len() {
                        buf[i] += g[i] * va[i];
                    }
                });
            }
            Rule::Scale { a, c } => self.send(adj, *a, |buf| {
                for (s, v) in buf.iter_mut().zip(g) {
                    *s += v * c;
                }
            }),
            Rule::SMul { s, x } => {
                let sv = self.nodes[s.0].value.data()[0];
                let vx = self.nodes[x.0].value.data();
                self.send(adj, *s, |buf| {
                    buf[0] += g.iter().zip(vx).map(|(gv, xv)| gv * xv).sum::<f64>();
                });
                self.send(adj, *x, |buf| {
                    for (b, v) in buf.iter_mut().zip(g) {
                        *b += v * sv;
                    }
                });
            }
            Rule::DivScalar { x, s } => {
                let sv = self.nodes[s.0].value.data()[0];
                let vx = self.nodes[x.0].value.data();
                self.send(adj, *x, |buf| {
                    for (b, v) in buf.iter_mut().zip(g) {
                        *b += v / sv;
                    }
                });
                self.send(adj, *s, |buf| {
                    buf[0] -= g.iter().zip(vx).map(|(gv, xv)| gv * xv).sum::<f64>() / (sv * sv);
                });
            }
            Rule::Matmul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let va = self.nodes[a.0].value.data();
                let vb = self.nodes[b.0].value.data();
                // dA = g . B^T
                self.send(adj, *a, |buf| {
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[i * n + j] * vb[p * n + j];
                            }
                            buf[i * k + p] += acc;
                        }
                    }
                });
                // dB = A^T . g
                self.send(adj, *b, |buf| {
                    for i in 0..m {
                        let aik = &va[i * k..(i + 1) * k];
                        let gi = &g[i * n..(i + 1) * n];
                        for (p, &av) in aik.iter().enumerate() {
                            if av == 0.0 {
                                continue;
                            }
                            let brow = &mut buf[p * n..(p + 1) * n];
                            for j in 0..n {
                                brow[j] += av * gi[j];
                            }
                        }
                    }
                });
            }
            Rule::Transpose { a, r, c } => self.send(adj, *a, |buf| {
                for i in 0..*r {
                    for j in 0..*c {
                        buf[i * c + j] += g[j * r + i];
                    }
                }
            }),
            Rule::Relu { a } => {
                let va = self.nodes[a.0].value.data();
                self.send(adj, *a, |buf| {
                    for i in 0..g.len() {
                        if va[i] > 0.0 {
                            buf[i] += g[i];
                        }
                    }
                });
            }
            Rule::Softplus { a } => {
                let va = self.nodes[a.0].value.data();
                self.send(adj, *a, |buf| {
                    for i in 0..g.len() {
                        buf[i] += g[i] * sigmoid_scalar(va[i]);
                    }
                });
            }
            Rule::Sigmoid { a } => {
                // d sigma = sigma (1 - sigma), from the stored output.
                let sv = self.nodes[out].value.data();
                self.send(adj, *a, |buf| {
                    for i in 0..g.len() {
                        buf[i] += g[i] * sv[i] * (1.0 - sv[i]);
                    }
                });
            }
            Rule::Log { a } => {
                let va = self.nodes[a.0].value.data();
                self.send(adj, *a, |buf| {
                    for i in 0..g.len() {
                        buf[i] += g[i] / va[i].max(LOG_FLOOR);
                    }
                });
            }
            Rule::Softmax { a, rows, cols } => {
                let p = self.nodes[out].value.data();
                self.send(adj, *a, |buf| {
                    for r in 0..*rows {
                        let pr = &p[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = pr.iter().zip(gr).map(|(p, g)| p * g).sum();
                        for j in 0..*cols {
                            buf[r * cols + j] += pr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Rule::Sum { a } => self.send(adj, *a, |buf| {
                for s in buf.iter_mut() {
                    *s += g[0];
                }
            }),
            Rule::Mean { a } => {
                let n = self.nodes[a.0].value.numel() as f64;
                self.send(adj, *a, |buf| {
                    for s in buf.iter_mut() {
                        *s += g[0] / n;
                    }
                });
            }
            Rule::Reshape { a } => self.send(adj, *a, |buf| {
                for (s, v) in buf.iter_mut().zip(g) {
                    *s += v;
                }
            }),
            Rule::Concat { parts } => {
                let mut off = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.numel();
                    self.send(adj, p, |buf| {
                        for i in 0..n {
                            buf[i] += g[off + i];
                        }
                    });
                    off += n;
                }
            }
            Rule::Slice { a, start } => {
                let len = g.len();
                self.send(adj, *a, |buf| {
                    for i in 0..len {
                        buf[start + i] += g[i];
                    }
                });
            }
            Rule::GatherScalar { a, index } => self.send(adj, *a, |buf| {
                buf[*index] += g[0];
            }),
            Rule::Conv2d { x, w, b, dims } => {
                let ConvDims { batch, c_in, h, w: wd, c_out, k } = *dims;
                let (ho, wo) = (h - k + 1, wd - k + 1);
                let vx = self.nodes[x.0].value.data();
                let vw = self.nodes[w.0].value.data();
                self.send(adj, *b, |buf| {
                    for bi in 0..batch {
                        for oc in 0..c_out {
                            let off = (bi * c_out + oc) * ho * wo;
                            buf[oc] += g[off..off + ho * wo].iter().sum::<f64>();
                        }
                    }
                });
                self.send(adj, *w, |buf| {
                    for bi in 0..batch {
                        for oc in 0..c_out {
                            for i in 0..ho {
                                for j in 0..wo {
                                    let gv = g[((bi * c_out + oc) * ho + i) * wo + j];
                                    if gv == 0.0 {
                                        continue;
                                    }
                                    for ic in 0..c_in {
                                        let xoff = ((bi * c_in + ic) * h + i) * wd + j;
                                        let woff = (oc * c_in + ic) * k * k;
                                        for u in 0..k {
                                            for v in 0..k {
                                                buf[woff + u * k + v] += gv * vx[xoff + u * wd + v];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
                self.send(adj, *x, |buf| {
                    for bi in 0..batch {
                        for oc in 0..c_out {
                            for i in 0..ho {
                                for j in 0..wo {
                                    let gv = g[((bi * c_out + oc) * ho + i) * wo + j];
                                    if gv == 0.0 {
                                        continue;
                                    }
                                    for ic in 0..c_in {
                                        let xoff = ((bi * c_in + ic) * h + i) * wd + j;
                                        let woff = (oc * c_in + ic) * k * k;
                                        for u in 0..k {
                                            for v in 0..k {
                                                buf[xoff + u * wd + v] += gv * vw[woff + u * k + v];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Rule::AvgPool2d { x, k, c_in_hw } => {
                let (batch, c, h, w) = *c_in_hw;
                let (ho, wo) = (h / k, w / k);
                let inv = 1.0 / (k * k) as f64;
                self.send(adj, *x, |buf| {
                    for bc in 0..batch * c {
                        for i in 0..ho {
                            for j in 0..wo {
                                let gv = g[(bc * ho + i) * wo + j] * inv;
                                for u in 0..*k {
                                    let off = (bc * h + i * k + u) * w + j * k;
                                    for v in 0..*k {
                                        buf[off + v] += gv;
                                    }
                                }
                            }
                        }
                    }
                });
            }
            Rule::NllLoss { probs, targets } => {
                let vp = self.nodes[probs.0].value.data();
                let cols = self.nodes[probs.0].value.shape()[1];
                let n = targets.len() as f64;
                self.send(adj, *probs, |buf| {
                    for (b, &t) in targets.iter().enumerate() {
                        buf[b * cols + t] -= g[0] / (n * vp[b * cols + t].max(LOG_FLOOR));
                    }
                });
            }
            Rule::MseLoss { pred, target } => {
                let vp = self.nodes[pred.0].value.data();
                let vt = self.nodes[target.0].value.data();
                let n = vp.len() as f64;
                self.send(adj, *pred, |buf| {
                    for i in 0..vp.len() {
                        buf[i] += g[0] * 2.0 * (vp[i] - vt[i]) / n;
                    }
                });
                self.send(adj, *target, |buf| {
                    for i in 0..vp.len() {
                        buf[i] -= g[0] * 2.0 * (vp[i] - vt[i]) / n;
                    }
                });
            }
        }
    }

}
