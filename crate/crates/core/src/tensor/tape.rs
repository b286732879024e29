use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::{matmul, matmul_t, t_matmul, ParameterSet, Tensor};
use crate::error::{Error, Result};
use crate::math;

/// Added to the variance inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Norm floor inside cosine similarity.
const COSINE_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    ClampMin(Var, f64),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Mean(Var),
    Sum(Var),
    ConcatLast(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SliceLast(Var, usize),
    Reshape(Var),
    Mse(Var, Var),
    CosineRows(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for one backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that receives a gradient.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Places every parameter on the tape; those for which `trainable`
    /// returns false become constants.
    pub fn bind(&mut self, params: &ParameterSet, trainable: impl Fn(&str) -> bool) -> Bound {
        let mut vars = BTreeMap::new();
        let mut order = Vec::with_capacity(params.len());
        for (i, (name, value)) in params.iter().enumerate() {
            let v = if trainable(name) {
                self.variable(value.clone())
            } else {
                self.constant(value.clone())
            };
            vars.insert(name.to_string(), v);
            order.push((i, v));
        }
        Bound { vars, order }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() > 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta, tb));
        }
        let out = matmul(ta, tb);
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.cols() {
            return Err(shape_err("matmul_t", ta, tb));
        }
        let out = matmul_t(ta, tb);
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::MatMulT(a, b), ng))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, rec: Op) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let out = self.value(a).zip(self.value(b), f);
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, rec, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Adds `bias` (one value per column) to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if tb.numel() != ta.cols() {
            return Err(shape_err("add_bias", ta, tb));
        }
        let c = ta.cols();
        let mut out = ta.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += tb.data()[i % c];
        }
        let ng = self.ng(&[a, bias]);
        Ok(self.push(out, Op::AddBias(a, bias), ng))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, rec: Op) -> Var {
        let out = self.value(a).map(f);
        let ng = self.ng(&[a]);
        self.push(out, rec, ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, math::sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, math::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, math::ln, Op::Ln(a))
    }

    /// `max(a, c)`; the gradient is zero where `a <= c`.
    pub fn clamp_min(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| if x > c { x } else { c }, Op::ClampMin(a, c))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if !ta.is_finite() {
            return Err(Error::numerical(0, "non-finite softmax input"));
        }
        let c = ta.cols();
        let mut out = ta.clone();
        for row in out.data_mut().chunks_mut(c.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = math::exp(*v - max);
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let ng = self.ng(&[a]);
        Ok(self.push(out, Op::Softmax(a), ng))
    }

    /// Layer normalization over the last axis followed by the affine map
    /// `gamma * xhat + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let c = tx.cols();
        if tg.numel() != c || tb.numel() != c {
            return Err(shape_err("layer_norm", tx, tg));
        }
        let mut xhat = tx.clone();
        let mut inv_std = Vec::with_capacity(tx.rows());
        let mut out = tx.clone();
        for (r, row) in xhat.data_mut().chunks_mut(c.max(1)).enumerate() {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / math::sqrt(var + LAYER_NORM_EPS);
            inv_std.push(is);
            for (i, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * is;
                out.data_mut()[r * c + i] = tg.data()[i] * *v + tb.data()[i];
            }
        }
        let ng = self.ng(&[x, gamma, beta]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.numel() == 0 {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let m = ta.data().iter().sum::<f64>() / ta.numel() as f64;
        let ng = self.ng(&[a]);
        Ok(self.push(Tensor::scalar(m), Op::Mean(a), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum::<f64>();
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of nothing"))?;
        let rows = self.value(*first).rows();
        for p in parts {
            if self.value(*p).rows() != rows {
                return Err(shape_err("concat_last", self.value(*first), self.value(*p)));
            }
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let out = Tensor::matrix(rows, cols, data)?;
        let ng = self.ng(parts);
        Ok(self.push(out, Op::ConcatLast(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of nothing"))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            if t.cols() != cols {
                return Err(shape_err("concat_rows", self.value(*first), t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows, cols, data)?;
        let ng = self.ng(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Selects rows by index; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let (rows, cols) = (ta.rows(), ta.cols());
        if let Some(bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid(format!("row index {bad} out of range for {rows} rows")));
        }
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(ta.row(i));
        }
        let out = Tensor::matrix(idx.len(), cols, data)?;
        let ng = self.ng(&[a]);
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec()), ng))
    }

    /// Columns `start..start + len` of every row.
    pub fn slice_last(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if start + len > ta.cols() {
            return Err(Error::invalid("column slice out of range"));
        }
        let mut data = Vec::with_capacity(ta.rows() * len);
        for r in 0..ta.rows() {
            data.extend_from_slice(&ta.row(r)[start..start + len]);
        }
        let out = Tensor::matrix(ta.rows(), len, data)?;
        let ng = self.ng(&[a]);
        Ok(self.push(out, Op::SliceLast(a, start), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        let ng = self.ng(&[a]);
        Ok(self.push(out, Op::Reshape(a), ng))
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.numel() == 0 {
            return Err(Error::invalid("mse of empty tensors"));
        }
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
            / ta.numel() as f64;
        let ng = self.ng(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::Mse(a, b), ng))
    }

    /// Row-wise cosine similarity, `rows x 1`.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("cosine_rows", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let rows = ta.rows();
        let data = (0..rows)
            .map(|r| {
                let (x, y) = (ta.row(r), tb.row(r));
                let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
                dot / (norm(x).max(COSINE_EPS) * norm(y).max(COSINE_EPS))
            })
            .collect();
        let out = Tensor::matrix(rows, 1, data)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::CosineRows(a, b), ng))
    }

    /// Gradients of the scalar `loss` with respect to every node that needs one.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::invalid("backward requires a scalar loss"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if self.needs_grad(*a) {
                    acc(*a, reshape_like(matmul_t(g, tb), ta));
                }
                if self.needs_grad(*b) {
                    acc(*b, t_matmul(&as_matrix(ta), g));
                }
            }
            Op::MatMulT(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if self.needs_grad(*a) {
                    acc(*a, matmul(g, tb));
                }
                if self.needs_grad(*b) {
                    acc(*b, t_matmul(g, ta));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip(val(*b), |x, y| x * y));
                acc(*b, g.zip(val(*a), |x, y| x * y));
            }
            Op::Div(a, b) => {
                let tb = val(*b);
                acc(*a, g.zip(tb, |x, d| x / d));
                let num = y.zip(tb, |q, d| q / d);
                acc(*b, g.zip(&num, |x, q| -x * q));
            }
            Op::AddBias(a, bias) => {
                acc(*a, g.clone());
                let tb = val(*bias);
                let c = g.cols();
                let mut db = vec![0.0; c];
                for (i, v) in g.data().iter().enumerate() {
                    db[i % c] += v;
                }
                acc(*bias, Tensor::new(tb.shape().to_vec(), db).expect("bias shape"));
            }
            Op::Scale(a, c) => acc(*a, g.map(|x| c * x)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Relu(a) => acc(*a, g.zip(val(*a), |x, v| if v > 0.0 { x } else { 0.0 })),
            Op::Sigmoid(a) => acc(*a, g.zip(y, |x, s| x * s * (1.0 - s))),
            Op::Exp(a) => acc(*a, g.zip(y, |x, e| x * e)),
            Op::Ln(a) => acc(*a, g.zip(val(*a), |x, v| x / v)),
            Op::ClampMin(a, c) => acc(*a, g.zip(val(*a), |x, v| if v > *c { x } else { 0.0 })),
            Op::Softmax(a) => {
                let c = y.cols().max(1);
                let mut dx = g.clone();
                for (drow, (grow, yrow)) in dx
                    .data_mut()
                    .chunks_mut(c)
                    .zip(g.data().chunks(c).zip(y.data().chunks(c)))
                {
                    let dot: f64 = grow.iter().zip(yrow).map(|(p, q)| p * q).sum();
                    for (d, (gv, yv)) in drow.iter_mut().zip(grow.iter().zip(yrow)) {
                        *d = yv * (gv - dot);
                    }
                }
                acc(*a, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = xhat.cols().max(1);
                let tg = val(*gamma);
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = xhat.clone();
                for (r, (drow, (grow, hrow))) in dx
                    .data_mut()
                    .chunks_mut(c)
                    .zip(g.data().chunks(c).zip(xhat.data().chunks(c)))
                    .enumerate()
                {
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for i in 0..c {
                        dgamma[i] += grow[i] * hrow[i];
                        dbeta[i] += grow[i];
                        let dh = grow[i] * tg.data()[i];
                        mean_dh += dh;
                        mean_dh_h += dh * hrow[i];
                    }
                    mean_dh /= c as f64;
                    mean_dh_h /= c as f64;
                    for i in 0..c {
                        let dh = grow[i] * tg.data()[i];
                        drow[i] = inv_std[r] * (dh - mean_dh - hrow[i] * mean_dh_h);
                    }
                }
                acc(*x, dx);
                acc(*gamma, Tensor::new(tg.shape().to_vec(), dgamma).expect("gamma shape"));
                acc(*beta, Tensor::new(val(*beta).shape().to_vec(), dbeta).expect("beta shape"));
            }
            Op::Mean(a) => {
                let ta = val(*a);
                let s = g.item() / ta.numel() as f64;
                acc(*a, Tensor::full(ta.shape(), s));
            }
            Op::Sum(a) => acc(*a, Tensor::full(val(*a).shape(), g.item())),
            Op::ConcatLast(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for p in parts {
                    let tp = val(*p);
                    let w = tp.cols();
                    let mut d = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        d.extend_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    offset += w;
                    acc(*p, Tensor::new(tp.shape().to_vec(), d).expect("concat part"));
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let tp = val(*p);
                    let n = tp.numel();
                    let d = g.data()[offset..offset + n].to_vec();
                    offset += n;
                    acc(*p, Tensor::new(tp.shape().to_vec(), d).expect("concat part"));
                }
            }
            Op::GatherRows(a, idx) => {
                let ta = val(*a);
                let c = ta.cols();
                let mut d = Tensor::zeros(ta.shape());
                for (out_row, &src) in idx.iter().enumerate() {
                    for i in 0..c {
                        d.data_mut()[src * c + i] += g.data()[out_row * c + i];
                    }
                }
                acc(*a, d);
            }
            Op::SliceLast(a, start) => {
                let ta = val(*a);
                let (c, w) = (ta.cols(), g.cols());
                let mut d = Tensor::zeros(ta.shape());
                for r in 0..ta.rows() {
                    d.data_mut()[r * c + start..r * c + start + w].copy_from_slice(g.row(r));
                }
                acc(*a, d);
            }
            Op::Reshape(a) => {
                let ta = val(*a);
                acc(*a, g.clone().reshaped(ta.shape()).expect("reshape back"));
            }
            Op::Mse(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let s = 2.0 * g.item() / ta.numel() as f64;
                let da = ta.zip(tb, |x, y| s * (x - y));
                acc(*b, da.map(|x| -x));
                acc(*a, da);
            }
            Op::CosineRows(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let c = ta.cols();
                let mut da = Tensor::zeros(ta.shape());
                let mut db = Tensor::zeros(tb.shape());
                for r in 0..ta.rows() {
                    let (x, z) = (ta.row(r), tb.row(r));
                    let (nx, nz) = (norm(x), norm(z));
                    let (ex, ez) = (nx.max(COSINE_EPS), nz.max(COSINE_EPS));
                    let cos = y.data()[r];
                    let gr = g.data()[r];
                    for i in 0..c {
                        // terms through a norm vanish where that norm is floored
                        let tx = if nx > COSINE_EPS { cos * x[i] / (ex * ex) } else { 0.0 };
                        let tz = if nz > COSINE_EPS { cos * z[i] / (ez * ez) } else { 0.0 };
                        da.data_mut()[r * c + i] = gr * (z[i] / (ex * ez) - tx);
                        db.data_mut()[r * c + i] = gr * (x[i] / (ex * ez) - tz);
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    math::sqrt(x.iter().map(|v| v * v).sum())
}

fn as_matrix(t: &Tensor) -> Tensor {
    Tensor::matrix(t.rows(), t.cols(), t.data().to_vec()).expect("matrix view")
}

fn reshape_like(t: Tensor, like: &Tensor) -> Tensor {
    t.reshaped(like.shape()).expect("same element count")
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `v` is unreachable from the loss or does not need a gradient.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

/// Parameter-name to tape-variable map produced by [`Tape::bind`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
    order: Vec<(usize, Var)>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    /// Writes gradients into the grad slots of `params` (the set this binding
    /// came from). Unreachable or frozen parameters get zero.
    pub fn store_grads(&self, tape: &Tape, grads: &Gradients, params: &mut ParameterSet) {
        for &(i, v) in &self.order {
            let slot = params.grad_by_index_mut(i);
            match grads.get(v) {
                Some(g) if tape.needs_grad(v) => slot.data_mut().copy_from_slice(g.data()),
                _ => slot.data_mut().iter_mut().for_each(|x| *x = 0.0),
            }
        }
    }
}
