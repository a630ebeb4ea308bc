//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every primitive executed through a [`Tape`] appends a node holding its
//! output value and the slots of its inputs. [`Tape::backward`] walks the
//! nodes in exact reverse execution order, accumulating adjoints. Reductions
//! always run in a fixed index order, so repeated runs are bit-identical.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a value slot on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param,
    Affine { input: Var, weight: Var, bias: Var },
    Relu(Var),
    Softmax(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    CrossEntropy { logits: Var, labels: Vec<usize> },
    ConfusionToUniform(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param => "param",
            Op::Affine { .. } => "affine",
            Op::Relu(_) => "relu",
            Op::Softmax(_) => "softmax",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sum(_) => "sum",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::ConfusionToUniform(_) => "confusion_to_uniform",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// One executed primitive: its name and the shape it produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpRecord {
    pub op: &'static str,
    pub shape: Vec<usize>,
}

/// Ordered record of executed primitives.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, var: Var) -> Result<()> {
        if var.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::contract(format!("slot {} does not belong to this tape", var.0)))
        }
    }

    /// Records a value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Records a trainable parameter.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Param)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Slots registered with [`Tape::param`], in registration order.
    pub fn params(&self) -> Vec<Var> {
        self.nodes.iter().enumerate().filter(|(_, n)| matches!(n.op, Op::Param)).map(|(i, _)| Var(i)).collect()
    }

    /// Primitive operations executed so far, leaves excluded.
    pub fn op_trace(&self) -> Vec<OpRecord> {
        self.nodes
            .iter()
            .filter(|n| !matches!(n.op, Op::Constant | Op::Param))
            .map(|n| OpRecord { op: n.op.name(), shape: n.value.shape().to_vec() })
            .collect()
    }

    /// `input · weight + bias` with `input: batch×in`, `weight: in×out`, `bias: out`.
    pub fn affine(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        for v in [input, weight, bias] {
            self.check(v)?;
        }
        let out = affine_forward(self.value(input), self.value(weight), self.value(bias))?.ensure_finite("affine")?;
        Ok(self.push(out, Op::Affine { input, weight, bias }))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        self.check(input)?;
        let x = self.value(input);
        let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Relu(input)))
    }

    /// Row-wise softmax of a `batch×C` matrix, `C ≥ 2`.
    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        self.check(logits)?;
        let out = softmax_rows(self.value(logits))?;
        Ok(self.push(out, Op::Softmax(logits)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (x, y) = (self.value(a), self.value(b));
        same_shape(x, y, "add")?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?.ensure_finite("add")?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (x, y) = (self.value(a), self.value(b));
        same_shape(x, y, "mul")?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?.ensure_finite("mul")?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let data = x.data().iter().map(|v| v * factor).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?.ensure_finite("scale")?;
        Ok(self.push(out, Op::Scale(a, factor)))
    }

    /// Sum of all entries, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let total = self.value(a).data().iter().sum();
        let out = Tensor::scalar(total).ensure_finite("sum")?;
        Ok(self.push(out, Op::Sum(a)))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check(logits)?;
        let z = self.value(logits);
        let (rows, cols) = z.dims2()?;
        if labels.len() != rows {
            return Err(Error::dim(format!("{} labels for {rows} rows", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= cols) {
            return Err(Error::contract(format!("label {bad} out of range for {cols} classes")));
        }
        if !z.all_finite() {
            return Err(Error::Numeric("cross_entropy received non-finite logits".into()));
        }
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = z.row(r);
            total += log_sum_exp(row) - row[label];
        }
        let out = Tensor::scalar(total / rows as f64).ensure_finite("cross_entropy")?;
        Ok(self.push(out, Op::CrossEntropy { logits, labels: labels.to_vec() }))
    }

    /// Mean over the batch of the squared distance between each probability
    /// row and the uniform vector `(1/K, …, 1/K)`.
    pub fn confusion_to_uniform(&mut self, probs: Var) -> Result<Var> {
        self.check(probs)?;
        let p = self.value(probs);
        let (rows, cols) = p.dims2()?;
        let uniform = 1.0 / cols as f64;
        let mut total = 0.0;
        for r in 0..rows {
            let row = p.row(r);
            let mass: f64 = row.iter().sum();
            if mass.is_nan() || (mass - 1.0).abs() > 1e-9 || row.iter().any(|&v| v < -1e-12) {
                return Err(Error::contract(format!("row {r} is not a probability vector (sums to {mass})")));
            }
            total += row.iter().map(|&v| (v - uniform) * (v - uniform)).sum::<f64>();
        }
        let out = Tensor::scalar(total / rows as f64);
        Ok(self.push(out, Op::ConfusionToUniform(probs)))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every registered parameter receives a gradient buffer of its own shape;
    /// parameters off the path to `loss` get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        if !self.value(loss).is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Tensor::scalar(1.0));
        let mut visited = Vec::new();

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            visited.push(idx);
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant | Op::Param => {}
                Op::Affine { input, weight, bias } => {
                    let x = self.value(*input);
                    let w = self.value(*weight);
                    let (batch, fan_in) = x.dims2()?;
                    let (_, fan_out) = w.dims2()?;
                    let (gd, xd, wd) = (g.data(), x.data(), w.data());

                    let mut dx = vec![0.0; batch * fan_in];
                    for b in 0..batch {
                        let grow = &gd[b * fan_out..(b + 1) * fan_out];
                        for i in 0..fan_in {
                            let wrow = &wd[i * fan_out..(i + 1) * fan_out];
                            dx[b * fan_in + i] = grow.iter().zip(wrow).map(|(p, q)| p * q).sum();
                        }
                    }
                    let mut dw = vec![0.0; fan_in * fan_out];
                    let mut db = vec![0.0; fan_out];
                    for b in 0..batch {
                        let grow = &gd[b * fan_out..(b + 1) * fan_out];
                        for i in 0..fan_in {
                            let xv = xd[b * fan_in + i];
                            let dwrow = &mut dw[i * fan_out..(i + 1) * fan_out];
                            for (d, gv) in dwrow.iter_mut().zip(grow) {
                                *d += xv * gv;
                            }
                        }
                        for (d, gv) in db.iter_mut().zip(grow) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut adj, *input, Tensor::new(vec![batch, fan_in], dx)?);
                    accumulate(&mut adj, *weight, Tensor::new(vec![fan_in, fan_out], dw)?);
                    accumulate(&mut adj, *bias, Tensor::new(self.value(*bias).shape().to_vec(), db)?);
                }
                Op::Relu(input) => {
                    let x = self.value(*input);
                    let data = x.data().iter().zip(g.data()).map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 }).collect();
                    accumulate(&mut adj, *input, Tensor::new(x.shape().to_vec(), data)?);
                }
                Op::Softmax(input) => {
                    let p = &node.value;
                    let (rows, cols) = p.dims2()?;
                    let mut data = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let prow = p.row(r);
                        let grow = &g.data()[r * cols..(r + 1) * cols];
                        let dot: f64 = prow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            data[r * cols + j] = prow[j] * (grow[j] - dot);
                        }
                    }
                    accumulate(&mut adj, *input, Tensor::new(vec![rows, cols], data)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g.clone());
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let da = g.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
                    let dbv = g.data().iter().zip(x.data()).map(|(p, q)| p * q).collect();
                    accumulate(&mut adj, *a, Tensor::new(x.shape().to_vec(), da)?);
                    accumulate(&mut adj, *b, Tensor::new(y.shape().to_vec(), dbv)?);
                }
                Op::Scale(a, factor) => {
                    let data = g.data().iter().map(|v| v * factor).collect();
                    accumulate(&mut adj, *a, Tensor::new(g.shape().to_vec(), data)?);
                }
                Op::Sum(a) => {
                    let gv = g.item()?;
                    let shape = self.value(*a).shape().to_vec();
                    let len = self.value(*a).len();
                    accumulate(&mut adj, *a, Tensor::new(shape, vec![gv; len])?);
                }
                Op::CrossEntropy { logits, labels } => {
                    let gv = g.item()?;
                    let mut p = softmax_rows(self.value(*logits))?;
                    let (rows, cols) = p.dims2()?;
                    let coeff = gv / rows as f64;
                    let data = p.data_mut();
                    for (r, &label) in labels.iter().enumerate() {
                        data[r * cols + label] -= 1.0;
                    }
                    for v in data.iter_mut() {
                        *v *= coeff;
                    }
                    accumulate(&mut adj, *logits, p);
                }
                Op::ConfusionToUniform(probs) => {
                    let gv = g.item()?;
                    let p = self.value(*probs);
                    let (rows, cols) = p.dims2()?;
                    let uniform = 1.0 / cols as f64;
                    let coeff = 2.0 * gv / rows as f64;
                    let data = p.data().iter().map(|&v| coeff * (v - uniform)).collect();
                    accumulate(&mut adj, *probs, Tensor::new(vec![rows, cols], data)?);
                }
            }
            adj[idx] = Some(g);
        }

        let mut grads = Vec::with_capacity(self.nodes.len());
        for (i, slot) in adj.into_iter().enumerate() {
            let node = &self.nodes[i];
            let filled = match (slot, &node.op) {
                (Some(t), _) => Some(t),
                (None, Op::Param) => Some(Tensor::zeros(node.value.shape())),
                (None, _) => None,
            };
            grads.push(filled);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.all_finite() {
                    return Err(Error::Numeric(format!("gradient of slot {i} is non-finite")));
                }
            }
        }
        Ok(Gradients { grads, visited })
    }
}

fn accumulate(adj: &mut [Option<Tensor>], var: Var, delta: Tensor) {
    match &mut adj[var.0] {
        Some(existing) => {
            for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn same_shape(a: &Tensor, b: &Tensor, op: &str) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::dim(format!("{op}: shapes {:?} and {:?} differ", a.shape(), b.shape())))
    }
}

fn affine_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, fan_in) = x.dims2()?;
    let (w_in, fan_out) = w.dims2()?;
    if w_in != fan_in {
        return Err(Error::dim(format!("affine: input has {fan_in} columns but weight has {w_in} rows")));
    }
    if b.len() != fan_out || b.shape().len() != 1 {
        return Err(Error::dim(format!("affine: bias shape {:?} does not match {fan_out} outputs", b.shape())));
    }
    let (xd, wd) = (x.data(), w.data());
    let mut out = Vec::with_capacity(batch * fan_out);
    for r in 0..batch {
        let mut acc = b.data().to_vec();
        for i in 0..fan_in {
            let xv = xd[r * fan_in + i];
            for (a, wv) in acc.iter_mut().zip(&wd[i * fan_out..(i + 1) * fan_out]) {
                *a += xv * wv;
            }
        }
        out.extend_from_slice(&acc);
    }
    Tensor::new(vec![batch, fan_out], out)
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Max-subtracted row softmax.
pub(crate) fn softmax_rows(z: &Tensor) -> Result<Tensor> {
    let (rows, cols) = z.dims2()?;
    if cols < 2 {
        return Err(Error::dim(format!("softmax needs at least 2 columns, got {cols}")));
    }
    if !z.all_finite() {
        return Err(Error::Numeric("softmax received non-finite logits".into()));
    }
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let row = z.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / total));
    }
    Tensor::new(vec![rows, cols], out)
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    visited: Vec<usize>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; `None` for slots the sweep
    /// never reached that are not parameters.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`], but panics for slots without a gradient.
    pub fn wrt(&self, var: Var) -> &Tensor {
        self.get(var).unwrap_or_else(|| panic!("no gradient recorded for slot {}", var.0))
    }

    /// Slots in the order the reverse sweep visited them.
    pub fn visit_order(&self) -> &[usize] {
        &self.visited
    }
}
