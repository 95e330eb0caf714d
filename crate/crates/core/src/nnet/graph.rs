//! Reverse-mode differentiation over a tape of matrix operations.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so walking the tape backwards is a valid topological
//! order for gradient propagation.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use super::params::Params;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Axis along which a one-dimensional kernel slides.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Kernel spans `kappa` consecutive rows (a `kappa x 1` kernel).
    Rows,
    /// Kernel spans `kappa` consecutive columns (a `1 x kappa` kernel).
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Transpose(Var),
    SoftmaxRows(Var, f64),
    Prelu(Var, Var),
    Sigmoid(Var),
    Conv(Var, Var, Axis),
    Unfold(Var, usize),
    MeanRows(Var),
    MaxRows(Var, Vec<usize>),
    MeanAll(Var),
    SumAll(Var),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    RowNormalize(Var),
    Iou(Var, Tensor),
    Bce(Var, Vec<f64>),
}

struct Node {
    value: Tensor,
    op: Op,
    param: Option<usize>,
}

/// Clamp applied to scores inside the binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;
/// Floor applied to predicted widths and heights inside the IoU op.
pub const IOU_MIN_EXTENT: f64 = 1e-6;

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    bound: HashMap<usize, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op, param: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Binds a learnable parameter. Binding the same name twice returns the
    /// same node so gradients from every use accumulate in one place.
    pub fn param(&mut self, params: &Params, name: &str) -> Result<Var> {
        let idx = params
            .index_of(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if let Some(&v) = self.bound.get(&idx) {
            return Ok(v);
        }
        let v = self.push(params.value_at(idx).clone(), Op::Leaf);
        self.nodes[v.0].param = Some(idx);
        self.bound.insert(idx, v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds the `1 x C` row `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape("add_row", format!("{:?} + {:?}", xv.shape(), bv.shape())));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, &bb) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        Ok(self.push(out, Op::AddRow(x, b)))
    }

    /// `x . w + b`, with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(op, format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.rows(), av.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        self.push(out, Op::Affine(x, scale))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.push(out, Op::Transpose(x))
    }

    /// Row-wise softmax of `x / scale`.
    pub fn softmax_rows(&mut self, x: Var, scale: f64) -> Result<Var> {
        if !(scale > 0.0) {
            return Err(Error::Config(format!("softmax scale must be positive, got {scale}")));
        }
        let mut out = self.value(x).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let m = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / scale));
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v / scale - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        Ok(self.push(out, Op::SoftmaxRows(x, scale)))
    }

    /// Parametric ReLU with a single learnable slope (`1 x 1`).
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        if self.shape(slope) != (1, 1) {
            return Err(Error::shape("prelu", "slope must be 1x1"));
        }
        let a = self.value(slope).item();
        let out = self.value(x).map(|v| if v >= 0.0 { v } else { a * v });
        Ok(self.push(out, Op::Prelu(x, slope)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    /// Same-size one-dimensional cross-correlation along `axis` with an odd
    /// `1 x kappa` kernel and zero padding, applied independently to every
    /// line along the other axis.
    pub fn conv(&mut self, x: Var, kernel: Var, axis: Axis) -> Result<Var> {
        let k = self.value(kernel);
        if k.rows() != 1 || k.cols().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "convolution kernel must be 1 x odd, got {:?}",
                k.shape()
            )));
        }
        let out = conv_forward(self.value(x), k, axis);
        Ok(self.push(out, Op::Conv(x, kernel, axis)))
    }

    /// Stacks `kappa` row-shifted copies of `x` side by side (zero padded), so
    /// that a following `linear` realises a temporal convolution with channel
    /// mixing. Output is `T x (kappa * C)`.
    pub fn unfold_rows(&mut self, x: Var, kappa: usize) -> Result<Var> {
        if kappa.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel size must be odd, got {kappa}")));
        }
        let xv = self.value(x);
        let (t, c) = xv.shape();
        let r = kappa / 2;
        let mut out = Tensor::zeros(t, kappa * c);
        for i in 0..t {
            for k in 0..kappa {
                let src = i as isize + k as isize - r as isize;
                if src < 0 || src >= t as isize {
                    continue;
                }
                let src_row = xv.row(src as usize);
                out.row_mut(i)[k * c..(k + 1) * c].copy_from_slice(src_row);
            }
        }
        Ok(self.push(out, Op::Unfold(x, kappa)))
    }

    /// Column means, `T x C -> 1 x C`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() == 0 {
            return Err(Error::shape("mean_rows", "no rows to pool"));
        }
        let mut out = Tensor::zeros(1, xv.cols());
        for r in 0..xv.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        let n = xv.rows() as f64;
        let out = out.map(|v| v / n);
        Ok(self.push(out, Op::MeanRows(x)))
    }

    /// Column maxima, `T x C -> 1 x C`.
    pub fn max_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() == 0 {
            return Err(Error::shape("max_rows", "no rows to pool"));
        }
        let mut out = Tensor::filled(1, xv.cols(), f64::NEG_INFINITY);
        let mut arg = vec![0usize; xv.cols()];
        for r in 0..xv.rows() {
            for (c, &v) in xv.row(r).iter().enumerate() {
                if v > out.get(0, c) {
                    out.set(0, c, v);
                    arg[c] = r;
                }
            }
        }
        Ok(self.push(out, Op::MaxRows(x, arg)))
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_empty() {
            return Err(Error::shape("mean_all", "empty input"));
        }
        let out = Tensor::scalar(xv.sum() / xv.len() as f64);
        Ok(self.push(out, Op::MeanAll(x)))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::SumAll(x))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(Error::shape(
                "concat_cols",
                format!("{:?} | {:?}", av.shape(), bv.shape()),
            ));
        }
        let mut out = Tensor::zeros(av.rows(), av.cols() + bv.cols());
        for r in 0..av.rows() {
            let row = out.row_mut(r);
            row[..av.cols()].copy_from_slice(av.row(r));
            row[av.cols()..].copy_from_slice(bv.row(r));
        }
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map_or(0, |&p| self.shape(p).1);
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.cols() != cols {
                return Err(Error::shape("concat_rows", "column counts differ"));
            }
            rows += pv.rows();
            data.extend_from_slice(pv.data());
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let mut out = Tensor::zeros(idx.len(), xv.cols());
        for (o, &i) in idx.iter().enumerate() {
            if i >= xv.rows() {
                return Err(Error::shape("gather_rows", format!("row {i} of {}", xv.rows())));
            }
            out.row_mut(o).copy_from_slice(xv.row(i));
        }
        Ok(self.push(out, Op::GatherRows(x, idx.to_vec())))
    }

    /// Divides every row by its sum. Rows must have a nonzero sum.
    pub fn row_normalize(&mut self, x: Var) -> Result<Var> {
        let mut out = self.value(x).clone();
        for r in 0..out.rows() {
            let s: f64 = out.row(r).iter().sum();
            if s == 0.0 {
                return Err(Error::Contract(format!("row {r} sums to zero")));
            }
            for v in out.row_mut(r) {
                *v /= s;
            }
        }
        Ok(self.push(out, Op::RowNormalize(x)))
    }

    /// Row-wise IoU between predicted center-form boxes (`M x 4`) and fixed
    /// target boxes. Output is `M x 1`.
    pub fn iou_rows(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let pv = self.value(pred);
        if pv.cols() != 4 || target.shape() != pv.shape() {
            return Err(Error::shape(
                "iou_rows",
                format!("{:?} vs {:?}", pv.shape(), target.shape()),
            ));
        }
        let mut out = Tensor::zeros(pv.rows(), 1);
        for r in 0..pv.rows() {
            out.set(r, 0, iou_parts(pv.row(r), target.row(r)).iou);
        }
        Ok(self.push(out, Op::Iou(pred, target.clone())))
    }

    /// Mean binary cross-entropy of scores (`P x 1`) against 0/1 labels.
    pub fn bce(&mut self, scores: Var, labels: &[f64]) -> Result<Var> {
        let sv = self.value(scores);
        if sv.cols() != 1 || sv.rows() != labels.len() || labels.is_empty() {
            return Err(Error::shape(
                "bce",
                format!("{:?} vs {} labels", sv.shape(), labels.len()),
            ));
        }
        let n = labels.len() as f64;
        let loss = sv
            .data()
            .iter()
            .zip(labels)
            .map(|(&c, &y)| {
                let c = c.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(y * c.ln() + (1.0 - y) * (1.0 - c).ln())
            })
            .sum::<f64>()
            / n;
        Ok(self.push(Tensor::scalar(loss), Op::Bce(scores, labels.to_vec())))
    }

    /// Fingerprint of every discrete choice made in the forward pass: PReLU
    /// branches, max-pool winners, IoU overlap cases, BCE clamps, and the
    /// values of non-parameter leaves (which covers masks computed from
    /// parameters outside the tape). Two passes with equal fingerprints lie
    /// on the same smooth piece.
    pub fn regime(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Leaf if node.param.is_none() => {
                    for v in node.value.data() {
                        v.to_bits().hash(&mut h);
                    }
                }
                Op::Prelu(x, _) => {
                    for v in self.value(*x).data() {
                        (*v >= 0.0).hash(&mut h);
                    }
                }
                Op::MaxRows(_, arg) => arg.hash(&mut h),
                Op::Iou(pred, target) => {
                    let pv = self.value(*pred);
                    for r in 0..pv.rows() {
                        iou_regime(pv.row(r), target.row(r)).hash(&mut h);
                    }
                }
                Op::Bce(scores, _) => {
                    for v in self.value(*scores).data() {
                        (*v < BCE_EPS, *v > 1.0 - BCE_EPS).hash(&mut h);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Propagates d`loss`/d`node` to every ancestor of the scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss has shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Adds the gradients of bound parameters into `params`.
    pub fn accumulate_param_grads(&self, params: &mut Params) {
        for (node, g) in self.nodes.iter().zip(&self.grads) {
            if let (Some(idx), Some(g)) = (node.param, g) {
                params.grad_at_mut(idx).add_assign(g);
            }
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let ga = g.matmul(&bv.transpose()).expect("shapes checked in forward");
                let gb = av.transpose().matmul(g).expect("shapes checked in forward");
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::AddRow(x, b) => {
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(grads, *x, g.clone());
                acc(grads, *b, gb);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                acc(grads, *a, zip(g, bv, |gv, bb| gv * bb));
                acc(grads, *b, zip(g, av, |gv, aa| gv * aa));
            }
            Op::Affine(x, scale) => acc(grads, *x, g.map(|v| v * scale)),
            Op::Transpose(x) => acc(grads, *x, g.transpose()),
            Op::SoftmaxRows(x, scale) => {
                let mut gx = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for c in 0..y.cols() {
                        gx.set(r, c, y.get(r, c) * (g.get(r, c) - dot) / scale);
                    }
                }
                acc(grads, *x, gx);
            }
            Op::Prelu(x, slope) => {
                let xv = self.value(*x);
                let a = self.value(*slope).item();
                let gx = zip(g, xv, |gv, xx| if xx >= 0.0 { gv } else { a * gv });
                let ga: f64 = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .filter(|(_, &xx)| xx < 0.0)
                    .map(|(gv, xx)| gv * xx)
                    .sum();
                acc(grads, *x, gx);
                acc(grads, *slope, Tensor::scalar(ga));
            }
            Op::Sigmoid(x) => acc(grads, *x, zip(g, y, |gv, s| gv * s * (1.0 - s))),
            Op::Conv(x, kernel, axis) => {
                let (gx, gk) = conv_backward(self.value(*x), self.value(*kernel), *axis, g);
                acc(grads, *x, gx);
                acc(grads, *kernel, gk);
            }
            Op::Unfold(x, kappa) => {
                let (t, c) = self.shape(*x);
                let r = kappa / 2;
                let mut gx = Tensor::zeros(t, c);
                for i in 0..t {
                    for k in 0..*kappa {
                        let src = i as isize + k as isize - r as isize;
                        if src < 0 || src >= t as isize {
                            continue;
                        }
                        let gs = &g.row(i)[k * c..(k + 1) * c];
                        for (o, v) in gx.row_mut(src as usize).iter_mut().zip(gs) {
                            *o += v;
                        }
                    }
                }
                acc(grads, *x, gx);
            }
            Op::MeanRows(x) => {
                let (t, c) = self.shape(*x);
                let mut gx = Tensor::zeros(t, c);
                for r in 0..t {
                    for (o, v) in gx.row_mut(r).iter_mut().zip(g.data()) {
                        *o = v / t as f64;
                    }
                }
                acc(grads, *x, gx);
            }
            Op::MaxRows(x, arg) => {
                let (t, c) = self.shape(*x);
                let mut gx = Tensor::zeros(t, c);
                for (col, &row) in arg.iter().enumerate() {
                    gx.set(row, col, g.get(0, col));
                }
                acc(grads, *x, gx);
            }
            Op::MeanAll(x) => {
                let (r, c) = self.shape(*x);
                acc(grads, *x, Tensor::filled(r, c, g.item() / (r * c) as f64));
            }
            Op::SumAll(x) => {
                let (r, c) = self.shape(*x);
                acc(grads, *x, Tensor::filled(r, c, g.item()));
            }
            Op::ConcatCols(a, b) => {
                let (ar, ac) = self.shape(*a);
                let bc = self.shape(*b).1;
                let mut ga = Tensor::zeros(ar, ac);
                let mut gb = Tensor::zeros(ar, bc);
                for r in 0..ar {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..ac]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[ac..]);
                }
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let (pr, pc) = self.shape(p);
                    let data = g.data()[start * pc..(start + pr) * pc].to_vec();
                    acc(grads, p, Tensor::from_vec(pr, pc, data).expect("sizes match"));
                    start += pr;
                }
            }
            Op::GatherRows(x, idx) => {
                let (xr, xc) = self.shape(*x);
                let mut gx = Tensor::zeros(xr, xc);
                for (o, &src) in idx.iter().enumerate() {
                    for (d, v) in gx.row_mut(src).iter_mut().zip(g.row(o)) {
                        *d += v;
                    }
                }
                acc(grads, *x, gx);
            }
            Op::RowNormalize(x) => {
                let xv = self.value(*x);
                let mut gx = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let s: f64 = xv.row(r).iter().sum();
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for c in 0..y.cols() {
                        gx.set(r, c, (g.get(r, c) - dot) / s);
                    }
                }
                acc(grads, *x, gx);
            }
            Op::Iou(pred, target) => {
                let pv = self.value(*pred);
                let mut gp = Tensor::zeros(pv.rows(), 4);
                for r in 0..pv.rows() {
                    let d = iou_parts(pv.row(r), target.row(r)).grad;
                    for (k, dv) in d.iter().enumerate() {
                        gp.set(r, k, g.get(r, 0) * dv);
                    }
                }
                acc(grads, *pred, gp);
            }
            Op::Bce(scores, labels) => {
                let sv = self.value(*scores);
                let n = labels.len() as f64;
                let gs: Vec<f64> = sv
                    .data()
                    .iter()
                    .zip(labels)
                    .map(|(&c, &yl)| {
                        if c <= BCE_EPS || c >= 1.0 - BCE_EPS {
                            0.0
                        } else {
                            -(yl / c - (1.0 - yl) / (1.0 - c)) / n
                        }
                    })
                    .collect();
                let gs = Tensor::from_vec(sv.rows(), 1, gs).expect("sizes match");
                acc(grads, *scores, gs.map(|v| v * g.item()));
            }
        }
    }
}

fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn conv_forward(x: &Tensor, k: &Tensor, axis: Axis) -> Tensor {
    let (rows, cols) = x.shape();
    let kappa = k.cols();
    let r = (kappa / 2) as isize;
    let mut out = Tensor::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let mut s = 0.0;
            for (t, &kv) in k.data().iter().enumerate() {
                let off = t as isize - r;
                let (si, sj) = match axis {
                    Axis::Cols => (i as isize, j as isize + off),
                    Axis::Rows => (i as isize + off, j as isize),
                };
                if si >= 0 && sj >= 0 && (si as usize) < rows && (sj as usize) < cols {
                    s += kv * x.get(si as usize, sj as usize);
                }
            }
            out.set(i, j, s);
        }
    }
    out
}

fn conv_backward(x: &Tensor, k: &Tensor, axis: Axis, g: &Tensor) -> (Tensor, Tensor) {
    let (rows, cols) = x.shape();
    let r = (k.cols() / 2) as isize;
    let mut gx = Tensor::zeros(rows, cols);
    let mut gk = Tensor::zeros(1, k.cols());
    for i in 0..rows {
        for j in 0..cols {
            let gv = g.get(i, j);
            if gv == 0.0 {
                continue;
            }
            for (t, &kv) in k.data().iter().enumerate() {
                let off = t as isize - r;
                let (si, sj) = match axis {
                    Axis::Cols => (i as isize, j as isize + off),
                    Axis::Rows => (i as isize + off, j as isize),
                };
                if si >= 0 && sj >= 0 && (si as usize) < rows && (sj as usize) < cols {
                    let (si, sj) = (si as usize, sj as usize);
                    gx.set(si, sj, gx.get(si, sj) + gv * kv);
                    gk.data_mut()[t] += gv * x.get(si, sj);
                }
            }
        }
    }
    (gx, gk)
}

struct IouParts {
    iou: f64,
    grad: [f64; 4],
}

/// IoU of center-form `p` against `t` and its gradient with respect to `p`.
fn iou_regime(p: &[f64], t: &[f64]) -> [bool; 8] {
    let side = |c: f64, e: f64, tc: f64, te: f64| {
        let e = e.max(IOU_MIN_EXTENT);
        let (lo, hi) = (c - e / 2.0, c + e / 2.0);
        let (tlo, thi) = (tc - te / 2.0, tc + te / 2.0);
        (hi <= thi, lo >= tlo, hi.min(thi) - lo.max(tlo) > 0.0)
    };
    let (a, b, c) = side(p[0], p[2], t[0], t[2]);
    let (d, e, f) = side(p[1], p[3], t[1], t[3]);
    [a, b, c, d, e, f, p[2] > IOU_MIN_EXTENT, p[3] > IOU_MIN_EXTENT]
}

fn iou_parts(p: &[f64], t: &[f64]) -> IouParts {
    let (px, py) = (p[0], p[1]);
    let (pw, dw_ok) = if p[2] > IOU_MIN_EXTENT {
        (p[2], 1.0)
    } else {
        (IOU_MIN_EXTENT, 0.0)
    };
    let (ph, dh_ok) = if p[3] > IOU_MIN_EXTENT {
        (p[3], 1.0)
    } else {
        (IOU_MIN_EXTENT, 0.0)
    };
    let (tx, ty, tw, th) = (t[0], t[1], t[2], t[3]);

    // per axis: overlap length and its derivative w.r.t. center and extent
    let axis = |c: f64, e: f64, tc: f64, te: f64| {
        let (lo, hi) = (c - e / 2.0, c + e / 2.0);
        let (tlo, thi) = (tc - te / 2.0, tc + te / 2.0);
        let hi_pred = hi <= thi;
        let lo_pred = lo >= tlo;
        let len = hi.min(thi) - lo.max(tlo);
        let d_hi = if hi_pred { 1.0 } else { 0.0 };
        let d_lo = if lo_pred { 1.0 } else { 0.0 };
        (len, d_hi - d_lo, 0.5 * d_hi + 0.5 * d_lo)
    };
    let (iw, diw_dx, diw_dw) = axis(px, pw, tx, tw);
    let (ih, dih_dy, dih_dh) = axis(py, ph, ty, th);
    if iw <= 0.0 || ih <= 0.0 {
        return IouParts {
            iou: 0.0,
            grad: [0.0; 4],
        };
    }
    let inter = iw * ih;
    let area_p = pw * ph;
    let union = area_p + tw * th - inter;
    let iou = inter / union;
    let d_inter = (union + inter) / (union * union);
    let d_area = -inter / (union * union);
    let grad = [
        d_inter * ih * diw_dx,
        d_inter * iw * dih_dy,
        (d_inter * ih * diw_dw + d_area * ph) * dw_ok,
        (d_inter * iw * dih_dh + d_area * pw) * dh_ok,
    ];
    IouParts { iou, grad }
}
