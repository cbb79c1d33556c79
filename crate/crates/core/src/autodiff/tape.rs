//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its inputs. Because nodes are appended in execution order the tape is
//! already topologically sorted, and [`Tape::backward`] is a single reverse
//! sweep. Gradients reaching parameter leaves are added into the
//! [`ParameterSet`] the leaves were bound from.

use super::tensor::{matmul_at_acc, matmul_bt_acc};
use super::{ParameterSet, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf { param: Option<usize> },
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    StackRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SpanSums { src: Var, spans: Vec<(usize, usize)>, mean: bool },
    Sum(Var),
    SoftmaxNll { logits: Var, labels: Vec<usize>, probs: Tensor },
    BceWithLogits { logits: Var, targets: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
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

    /// Drops every node so the tape can record a new step.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { param: None })
    }

    /// Records parameter `idx` of `params` as a differentiable leaf.
    pub fn param(&mut self, params: &ParameterSet, idx: usize) -> Var {
        self.push(params.get(idx).value.clone(), Op::Leaf { param: Some(idx) })
    }

    /// Binds every parameter, returning leaves indexed like `params`.
    pub fn bind(&mut self, params: &ParameterSet) -> Vec<Var> {
        (0..params.len()).map(|i| self.param(params, i)).collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `x (n x m) + bias (1 x m)` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape("add_bias", format!("{:?} + {:?}", xv.shape(), bv.shape())));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.rows(), av.cols(), data).expect("shapes checked")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Columns `[start, start + width)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let av = self.value(a);
        if start + width > av.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("[{start}, {}) of {} columns", start + width, av.cols()),
            ));
        }
        let mut out = Tensor::zeros(av.rows(), width);
        for r in 0..av.rows() {
            out.row_mut(r).copy_from_slice(&av.row(r)[start..start + width]);
        }
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let av = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= av.rows()) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {}", av.rows())));
        }
        let mut out = Tensor::zeros(rows.len(), av.cols());
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(av.row(r));
        }
        Ok(self.push(out, Op::GatherRows(a, rows.to_vec())))
    }

    /// Stacks `1 x m` vectors into a `k x m` matrix.
    pub fn stack_rows(&mut self, vs: &[Var]) -> Result<Var> {
        let cols = vs.first().map_or(0, |&v| self.value(v).cols());
        let mut data = Vec::with_capacity(vs.len() * cols);
        for &v in vs {
            let vv = self.value(v);
            if vv.rows() != 1 || vv.cols() != cols {
                return Err(Error::shape("stack_rows", format!("row of shape {:?}", vv.shape())));
            }
            data.extend_from_slice(vv.data());
        }
        let out = Tensor::from_vec(vs.len(), cols, data)?;
        Ok(self.push(out, Op::StackRows(vs.to_vec())))
    }

    pub fn concat_cols(&mut self, vs: &[Var]) -> Result<Var> {
        let rows = vs.first().map_or(0, |&v| self.value(v).rows());
        if vs.iter().any(|&v| self.value(v).rows() != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let cols: usize = vs.iter().map(|&v| self.value(v).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &v in vs {
                let src = self.value(v).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(vs.to_vec())))
    }

    /// One output row per span `[s, e)`: the sum (or mean) of rows `s..e` of `src`.
    pub fn span_sums(&mut self, src: Var, spans: &[(usize, usize)], mean: bool) -> Result<Var> {
        let sv = self.value(src);
        let mut out = Tensor::zeros(spans.len(), sv.cols());
        for (i, &(s, e)) in spans.iter().enumerate() {
            if s >= e || e > sv.rows() {
                return Err(Error::InvalidSpan { start: s, end: e, frames: sv.rows() });
            }
            let orow = out.row_mut(i);
            for t in s..e {
                for (o, x) in orow.iter_mut().zip(sv.row(t)) {
                    *o += x;
                }
            }
            if mean {
                let inv = 1.0 / (e - s) as f64;
                orow.iter_mut().for_each(|o| *o *= inv);
            }
        }
        Ok(self.push(out, Op::SpanSums { src, spans: spans.to_vec(), mean }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Mean over rows of `-log softmax(logits[t])[labels[t]]`.
    pub fn softmax_nll(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != labels.len() || lv.rows() == 0 {
            return Err(Error::shape(
                "softmax_nll",
                format!("{} rows for {} labels", lv.rows(), labels.len()),
            ));
        }
        let classes = lv.cols();
        let mut probs = Tensor::zeros(lv.rows(), classes);
        let mut total = 0.0;
        for (t, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(Error::LabelOutOfRange { label: y, classes });
            }
            let row = lv.row(t);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|x| (x - max).exp()).sum();
            total += denom.ln() + max - row[y];
            for (p, x) in probs.row_mut(t).iter_mut().zip(row) {
                *p = (x - max).exp() / denom;
            }
        }
        let out = Tensor::scalar(total / labels.len() as f64);
        Ok(self.push(out, Op::SoftmaxNll { logits, labels: labels.to_vec(), probs }))
    }

    /// Mean binary cross-entropy between `sigmoid(logits)` and `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.len() != targets.len() || targets.is_empty() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("{} logits for {} targets", lv.len(), targets.len()),
            ));
        }
        let total: f64 = lv.data().iter().zip(targets).map(|(&x, &y)| softplus(x) - y * x).sum();
        let out = Tensor::scalar(total / targets.len() as f64);
        Ok(self.push(out, Op::BceWithLogits { logits, targets: targets.to_vec() }))
    }

    /// Reverse sweep from the scalar `loss`, adding parameter gradients into
    /// `params`. A tape can be differentiated once; call [`Tape::reset`] to reuse it.
    pub fn backward(&mut self, loss: Var, params: &mut ParameterSet) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss { rows: lv.rows(), cols: lv.cols() });
        }
        self.consumed = true;

        let nodes = &self.nodes;
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        fn slot<'g>(grads: &'g mut [Option<Tensor>], nodes: &[Node], v: Var) -> &'g mut Tensor {
            grads[v.0].get_or_insert_with(|| {
                let (r, c) = nodes[v.0].value.shape();
                Tensor::zeros(r, c)
            })
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            match &node.op {
                Op::Leaf { param: Some(p) } => params.get_mut(*p).grad.add_assign(&g),
                Op::Leaf { param: None } => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                    matmul_bt_acc(g.data(), bv.data(), slot(&mut grads, nodes, *a).data_mut(), n, m, k);
                    matmul_at_acc(av.data(), g.data(), slot(&mut grads, nodes, *b).data_mut(), n, k, m);
                }
                Op::AddBias(x, b) => {
                    slot(&mut grads, nodes, *x).add_assign(&g);
                    let gb = slot(&mut grads, nodes, *b).data_mut();
                    for r in 0..g.rows() {
                        for (o, v) in gb.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::Add(a, b) => {
                    slot(&mut grads, nodes, *a).add_assign(&g);
                    slot(&mut grads, nodes, *b).add_assign(&g);
                }
                Op::Sub(a, b) => {
                    slot(&mut grads, nodes, *a).add_assign(&g);
                    let gb = slot(&mut grads, nodes, *b).data_mut();
                    for (o, v) in gb.iter_mut().zip(g.data()) {
                        *o -= v;
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let ga = slot(&mut grads, nodes, *a).data_mut();
                    for ((o, gv), y) in ga.iter_mut().zip(g.data()).zip(bv.data()) {
                        *o += gv * y;
                    }
                    let gb = slot(&mut grads, nodes, *b).data_mut();
                    for ((o, gv), x) in gb.iter_mut().zip(g.data()).zip(av.data()) {
                        *o += gv * x;
                    }
                }
                Op::Scale(a, c) => {
                    let ga = slot(&mut grads, nodes, *a).data_mut();
                    for (o, gv) in ga.iter_mut().zip(g.data()) {
                        *o += c * gv;
                    }
                }
                Op::AddScalar(a) => slot(&mut grads, nodes, *a).add_assign(&g),
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = slot(&mut grads, nodes, *a).data_mut();
                    for ((o, gv), yv) in ga.iter_mut().zip(g.data()).zip(y.data()) {
                        *o += gv * (1.0 - yv * yv);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ga = slot(&mut grads, nodes, *a).data_mut();
                    for ((o, gv), yv) in ga.iter_mut().zip(g.data()).zip(y.data()) {
                        *o += gv * yv * (1.0 - yv);
                    }
                }
                Op::Relu(a) => {
                    let y = &node.value;
                    let ga = slot(&mut grads, nodes, *a).data_mut();
                    for ((o, gv), yv) in ga.iter_mut().zip(g.data()).zip(y.data()) {
                        if *yv > 0.0 {
                            *o += gv;
                        }
                    }
                }
                Op::SliceCols(a, start) => {
                    let ga = slot(&mut grads, nodes, *a);
                    for r in 0..g.rows() {
                        let dst = &mut ga.row_mut(r)[*start..*start + g.cols()];
                        for (o, v) in dst.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                Op::GatherRows(a, rows) => {
                    let ga = slot(&mut grads, nodes, *a);
                    for (i, &r) in rows.iter().enumerate() {
                        for (o, v) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
                Op::StackRows(vs) => {
                    for (i, v) in vs.iter().enumerate() {
                        let gv = slot(&mut grads, nodes, *v).data_mut();
                        for (o, x) in gv.iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                }
                Op::ConcatCols(vs) => {
                    let mut off = 0;
                    for v in vs {
                        let gv = slot(&mut grads, nodes, *v);
                        let w = gv.cols();
                        for r in 0..g.rows() {
                            for (o, x) in gv.row_mut(r).iter_mut().zip(&g.row(r)[off..off + w]) {
                                *o += x;
                            }
                        }
                        off += w;
                    }
                }
                Op::SpanSums { src, spans, mean } => {
                    let gs = slot(&mut grads, nodes, *src);
                    for (i, &(s, e)) in spans.iter().enumerate() {
                        let scale = if *mean { 1.0 / (e - s) as f64 } else { 1.0 };
                        for t in s..e {
                            for (o, x) in gs.row_mut(t).iter_mut().zip(g.row(i)) {
                                *o += scale * x;
                            }
                        }
                    }
                }
                Op::Sum(a) => {
                    let gv = g.item();
                    slot(&mut grads, nodes, *a).data_mut().iter_mut().for_each(|o| *o += gv);
                }
                Op::SoftmaxNll { logits, labels, probs } => {
                    let scale = g.item() / labels.len() as f64;
                    let gl = slot(&mut grads, nodes, *logits);
                    for (t, &y) in labels.iter().enumerate() {
                        let row = gl.row_mut(t);
                        for (o, p) in row.iter_mut().zip(probs.row(t)) {
                            *o += scale * p;
                        }
                        row[y] -= scale;
                    }
                }
                Op::BceWithLogits { logits, targets } => {
                    let scale = g.item() / targets.len() as f64;
                    let xs = &nodes[logits.0].value;
                    let gl = slot(&mut grads, nodes, *logits).data_mut();
                    for ((o, &x), &y) in gl.iter_mut().zip(xs.data()).zip(targets) {
                        *o += scale * (sigmoid(x) - y);
                    }
                }
            }
        }
        Ok(())
    }
}
