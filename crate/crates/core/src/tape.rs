//! Record-and-replay reverse-mode differentiation over [`Tensor`] values.
//!
//! Every primitive appends a node whose parents precede it, so the tape is a
//! topologically ordered DAG and `backward` is a single reverse sweep. Nodes
//! created with [`Tape::leaf`] receive gradients; nodes created with
//! [`Tape::constant`] do not, and neither do nodes computed only from
//! constants.
//!
//! Gradients accumulate across `backward` calls until [`Tape::zero_grad`].
//! Every primitive rejects non-finite results.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise primitives exposed through [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Tanh,
    Sigmoid,
    Relu,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Abs(Var),
    Softmax(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Reshape(Var),
    Transpose(Var),
    Sum(Var),
    SelectRow { table: Var, row: usize },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        check_finite("leaf", &value)?;
        Ok(self.push(value, Op::Leaf, true))
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        check_finite("constant", &value)?;
        Ok(self.push(value, Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient, `None` until a backward pass reaches the node.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn is_leaf(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf)
    }

    /// Leaf nodes that receive gradients, in tape order.
    pub fn trainable_leaves(&self) -> impl Iterator<Item = Var> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.requires_grad && matches!(n.op, Op::Leaf))
            .map(|(i, _)| Var(i))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, name: &'static str, value: Tensor, op: Op, parents: &[Var]) -> Result<Var> {
        check_finite(name, &value)?;
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    /// Matrix product. `b` may be rank 1, in which case it is treated as a
    /// column and the result is rank 1.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape(), vb.shape());
        if sa.len() != 2 || !(sb.len() == 1 || sb.len() == 2) || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (p, q) = (sa[0], sa[1]);
        let r = if sb.len() == 2 { sb[1] } else { 1 };
        let out = matmul_raw(va.data(), vb.data(), p, q, r);
        let shape = if sb.len() == 2 { vec![p, r] } else { vec![p] };
        self.record("matmul", Tensor::from_parts(shape, out), Op::MatMul(a, b), &[a, b])
    }

    pub fn elementwise(&mut self, op: Elementwise, operands: &[Var]) -> Result<Var> {
        let arity = match op {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        };
        if operands.len() != arity {
            return Err(Error::InvalidConfig(format!(
                "{op:?} takes {arity} operand(s), got {}",
                operands.len()
            )));
        }
        match op {
            Elementwise::Add => self.add(operands[0], operands[1]),
            Elementwise::Sub => self.sub(operands[0], operands[1]),
            Elementwise::Mul => self.mul(operands[0], operands[1]),
            Elementwise::Tanh => self.tanh(operands[0]),
            Elementwise::Sigmoid => self.sigmoid(operands[0]),
            Elementwise::Relu => self.relu(operands[0]),
        }
    }

    /// Elementwise sum. The only permitted broadcast is adding a rank-1
    /// bias along the last axis of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            let out = zip(self.value(a), self.value(b), |x, y| x + y);
            return self.record("add", out, Op::Add(a, b), &[a, b]);
        }
        if sa.len() >= 2 && sb.len() == 1 && sa[sa.len() - 1] == sb[0] {
            let bias = self.value(b).data();
            let n = bias.len();
            let va = self.value(a);
            let data = va
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| x + bias[i % n])
                .collect();
            let out = Tensor::from_parts(va.shape().to_vec(), data);
            return self.record("add", out, Op::AddBias(a, b), &[a, b]);
        }
        Err(Error::shape("add", sa, sb))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = zip(self.value(a), self.value(b), |x, y| x - y);
        self.record("sub", out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = zip(self.value(a), self.value(b), |x, y| x * y);
        self.record("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let out = map(self.value(a), |x| x * factor);
        self.record("scale", out, Op::Scale(a, factor), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = map(self.value(a), f64::tanh);
        self.record("tanh", out, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = map(self.value(a), sigmoid);
        self.record("sigmoid", out, Op::Sigmoid(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = map(self.value(a), |x| x.max(0.0));
        self.record("relu", out, Op::Relu(a), &[a])
    }

    /// Absolute value; the subgradient at 0 is 0.
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let out = map(self.value(a), f64::abs);
        self.record("abs", out, Op::Abs(a), &[a])
    }

    /// Softmax of a rank-1 tensor, computed with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.rank() != 1 {
            return Err(Error::shape("softmax", va.shape(), &[]));
        }
        if va.is_empty() {
            return Err(Error::EmptyInput { op: "softmax" });
        }
        let out = Tensor::vector(softmax(va.data()));
        self.record("softmax", out, Op::Softmax(a), &[a])
    }

    /// Concatenate along `axis`; every other extent must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = match parts.first() {
            Some(&p) => self.shape(p).to_vec(),
            None => return Err(Error::EmptyInput { op: "concat" }),
        };
        if axis >= first.len() {
            return Err(Error::shape("concat", &first, &[axis]));
        }
        let mut axis_total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &first, s));
            }
            axis_total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * axis_total * inner);
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let chunk = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first;
        shape[axis] = axis_total;
        let op = Op::Concat {
            parts: parts.to_vec(),
            axis,
        };
        self.record("concat", Tensor::from_parts(shape, data), op, parts)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshaped(shape)?;
        self.record("reshape", out, Op::Reshape(a), &[a])
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.rank() != 2 {
            return Err(Error::shape("transpose", va.shape(), &[]));
        }
        let (r, c) = (va.shape()[0], va.shape()[1]);
        let data = transpose_raw(va.data(), r, c);
        self.record("transpose", Tensor::from_parts(vec![c, r], data), Op::Transpose(a), &[a])
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).data().iter().sum();
        self.record("sum", Tensor::scalar(total), Op::Sum(a), &[a])
    }

    /// Row `row` of a rank-2 table.
    pub fn select_row(&mut self, table: Var, row: usize) -> Result<Var> {
        let vt = self.value(table);
        if vt.rank() != 2 || row >= vt.shape()[0] {
            return Err(Error::shape("select_row", vt.shape(), &[row]));
        }
        let cols = vt.shape()[1];
        let data = vt.data()[row * cols..(row + 1) * cols].to_vec();
        self.record("select_row", Tensor::vector(data), Op::SelectRow { table, row }, &[table])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    /// Propagate d(loss)/d(node) to every differentiable node reachable from
    /// `loss`, adding into the stored gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let seed_shape = self.shape(loss).to_vec();
        if !self.value(loss).is_scalar_shaped() {
            return Err(Error::NonScalarLoss { shape: seed_shape });
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            adj[i] = Some(g);
        }

        for (node, g) in self.nodes.iter_mut().zip(adj) {
            let Some(g) = g else { continue };
            if !node.requires_grad {
                continue;
            }
            match &mut node.grad {
                Some(acc) => {
                    for (a, x) in acc.data_mut().iter_mut().zip(&g) {
                        *a += x;
                    }
                }
                None => node.grad = Some(Tensor::from_parts(node.value.shape().to_vec(), g)),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        let val = |v: Var| nodes[v.0].value.data();
        let out = nodes[i].value.data();

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                let (p, q) = (sa[0], sa[1]);
                let r = if sb.len() == 2 { sb[1] } else { 1 };
                if wants(*a) {
                    // dA = dC · Bᵀ
                    let bt = transpose_raw(val(*b), q, r);
                    let da = matmul_raw(g, &bt, p, r, q);
                    add_into(slot(adj, *a, p * q), &da);
                }
                if wants(*b) {
                    // dB = Aᵀ · dC
                    let at = transpose_raw(val(*a), p, q);
                    let db = matmul_raw(&at, g, q, p, r);
                    add_into(slot(adj, *b, q * r), &db);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if wants(*v) {
                        add_into(slot(adj, *v, g.len()), g);
                    }
                }
            }
            Op::AddBias(a, b) => {
                if wants(*a) {
                    add_into(slot(adj, *a, g.len()), g);
                }
                if wants(*b) {
                    let n = val(*b).len();
                    let db = slot(adj, *b, n);
                    for (k, x) in g.iter().enumerate() {
                        db[k % n] += x;
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    add_into(slot(adj, *a, g.len()), g);
                }
                if wants(*b) {
                    for (d, x) in slot(adj, *b, g.len()).iter_mut().zip(g) {
                        *d -= x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (val(*a), val(*b));
                if wants(*a) {
                    let d = slot(adj, *a, g.len());
                    for k in 0..g.len() {
                        d[k] += g[k] * xb[k];
                    }
                }
                if wants(*b) {
                    let d = slot(adj, *b, g.len());
                    for k in 0..g.len() {
                        d[k] += g[k] * xa[k];
                    }
                }
            }
            Op::Scale(a, factor) => {
                for (d, x) in slot(adj, *a, g.len()).iter_mut().zip(g) {
                    *d += x * factor;
                }
            }
            Op::Tanh(a) => {
                let d = slot(adj, *a, g.len());
                for k in 0..g.len() {
                    d[k] += g[k] * (1.0 - out[k] * out[k]);
                }
            }
            Op::Sigmoid(a) => {
                let d = slot(adj, *a, g.len());
                for k in 0..g.len() {
                    d[k] += g[k] * out[k] * (1.0 - out[k]);
                }
            }
            Op::Relu(a) => {
                let x = val(*a);
                let d = slot(adj, *a, g.len());
                for k in 0..g.len() {
                    if x[k] > 0.0 {
                        d[k] += g[k];
                    }
                }
            }
            Op::Abs(a) => {
                let x = val(*a);
                let d = slot(adj, *a, g.len());
                for k in 0..g.len() {
                    if x[k] > 0.0 {
                        d[k] += g[k];
                    } else if x[k] < 0.0 {
                        d[k] -= g[k];
                    }
                }
            }
            Op::Softmax(a) => {
                let dot: f64 = g.iter().zip(out).map(|(x, y)| x * y).sum();
                let d = slot(adj, *a, g.len());
                for k in 0..g.len() {
                    d[k] += out[k] * (g[k] - dot);
                }
            }
            Op::Concat { parts, axis } => {
                let shape = nodes[i].value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let row = shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let chunk = nodes[p.0].value.shape()[*axis] * inner;
                    if wants(p) {
                        let d = slot(adj, p, outer * chunk);
                        for o in 0..outer {
                            let src = &g[o * row + offset..o * row + offset + chunk];
                            add_into(&mut d[o * chunk..(o + 1) * chunk], src);
                        }
                    }
                    offset += chunk;
                }
            }
            Op::Reshape(a) => add_into(slot(adj, *a, g.len()), g),
            Op::Transpose(a) => {
                let s = nodes[a.0].value.shape();
                // g has shape [c, r]
                let gt = transpose_raw(g, s[1], s[0]);
                add_into(slot(adj, *a, g.len()), &gt);
            }
            Op::Sum(a) => {
                let n = val(*a).len();
                for d in slot(adj, *a, n) {
                    *d += g[0];
                }
            }
            Op::SelectRow { table, row } => {
                let s = nodes[table.0].value.shape();
                let cols = s[1];
                let d = slot(adj, *table, s[0] * cols);
                add_into(&mut d[row * cols..(row + 1) * cols], g);
            }
        }
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    adj[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect())
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `[p×q] · [q×r]`, row-major.
fn matmul_raw(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        let row = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * r..(k + 1) * r];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}
