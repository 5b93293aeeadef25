use std::f64::consts::PI;
use std::rc::Rc;

use super::params::ParameterSet;
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Compressed row groups: group `g` owns rows `offsets[g]..offsets[g + 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    offsets: Vec<usize>,
}

impl Segments {
    pub fn from_offsets(offsets: Vec<usize>) -> Result<Self> {
        if offsets.first() != Some(&0) || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid_arg("segment offsets must start at 0 and be non-decreasing"));
        }
        Ok(Segments { offsets })
    }

    /// `groups` consecutive groups of `size` rows each.
    pub fn uniform(groups: usize, size: usize) -> Self {
        Segments {
            offsets: (0..=groups).map(|g| g * size).collect(),
        }
    }

    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Self {
        let mut offsets = vec![0];
        for l in lengths {
            offsets.push(offsets.last().copied().unwrap_or(0) + l);
        }
        Segments { offsets }
    }

    pub fn groups(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn range(&self, g: usize) -> std::ops::Range<usize> {
        self.offsets[g]..self.offsets[g + 1]
    }
}

enum Op {
    Leaf,
    Param(String),
    Linear { x: Var, w: Var, b: Option<Var> },
    Relu(Var),
    Concat(Vec<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Gather { x: Var, idx: Rc<Vec<usize>> },
    MaxOverSet { x: Var, argmax: Vec<usize> },
    SumWeighted { x: Var, w: Var, seg: Rc<Segments> },
    ScaledBias { s: Var, b: Var },
    CosineWeight { d: Var, r: f64 },
    NeighborAggregate(Box<Aggregate>),
    Mse { pred: Var, target: Var },
    Sum(Var),
}

struct Aggregate {
    table: Var,
    offsets: Var,
    w_off: Var,
    weights: Var,
    idx: Rc<Vec<usize>>,
    seg: Rc<Segments>,
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Dynamic tape of tensor operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn shape_err(op: &str, detail: String) -> Error {
    Error::invalid_arg(format!("{op}: {detail}"))
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

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` loss with respect to `v`, if `v`
    /// required one.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// Input whose gradient is kept after `backward`.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Copy a named parameter onto the tape. Gradients flow back into the
    /// set passed to `backward`.
    pub fn param(&mut self, params: &ParameterSet, name: &str) -> Result<Var> {
        let p = params
            .get(name)
            .ok_or_else(|| Error::invalid_arg(format!("unknown parameter '{name}'")))?;
        Ok(self.push(p.value.clone(), true, Op::Param(name.to_string())))
    }

    /// Parameter value as a constant (inference without gradients).
    pub fn param_frozen(&mut self, params: &ParameterSet, name: &str) -> Result<Var> {
        let p = params
            .get(name)
            .ok_or_else(|| Error::invalid_arg(format!("unknown parameter '{name}'")))?;
        Ok(self.constant(p.value.clone()))
    }

    /// `y = x Wᵀ + b` with `x: n×in`, `W: out×in`, `b: 1×out`.
    pub fn linear(&mut self, w: Var, b: Option<Var>, x: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (n, din) = (xv.rows(), xv.cols());
        let dout = wv.rows();
        if wv.cols() != din {
            return Err(shape_err("linear", format!("input width {din} vs weight {:?}", wv.shape())));
        }
        let mut out = Tensor::zeros(n, dout);
        gemm(n, din, dout, xv.data(), false, wv.data(), true, 0.0, out.data_mut());
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != [1, dout] {
                return Err(shape_err("linear", format!("bias shape {:?}, want [1, {dout}]", bv.shape())));
            }
            let bias = bv.data().to_vec();
            for r in 0..n {
                for (o, bb) in out.row_mut(r).iter_mut().zip(&bias) {
                    *o += bb;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(out, rg, Op::Linear { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = xv.clone();
        for v in out.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let rg = self.rg(x);
        self.push(out, rg, Op::Relu(x))
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let rows = xs
            .first()
            .map(|v| self.value(*v).rows())
            .ok_or_else(|| shape_err("concat", "no inputs".into()))?;
        if let Some(bad) = xs.iter().find(|v| self.value(**v).rows() != rows) {
            return Err(shape_err(
                "concat",
                format!("row count {} vs {rows}", self.value(*bad).rows()),
            ));
        }
        let cols: usize = xs.iter().map(|v| self.value(*v).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for v in xs {
                let t = self.value(*v);
                out.row_mut(r)[c0..c0 + t.cols()].copy_from_slice(t.row(r));
                c0 += t.cols();
            }
        }
        let rg = xs.iter().any(|v| self.rg(*v));
        Ok(self.push(out, rg, Op::Concat(xs.to_vec())))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, sign: f64) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let mut out = av.clone();
        for (o, v) in out.data_mut().iter_mut().zip(bv.data()) {
            *o += sign * v;
        }
        let rg = self.rg(a) || self.rg(b);
        let op = if sign > 0.0 { Op::Add(a, b) } else { Op::Sub(a, b) };
        Ok(self.push(out, rg, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", 1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", -1.0)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v *= factor;
        }
        let rg = self.rg(x);
        self.push(out, rg, Op::Scale(x, factor))
    }

    /// Rows `x[idx[0]], x[idx[1]], ...`.
    pub fn gather(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.cols();
        if let Some(bad) = idx.iter().find(|&&i| i >= xv.rows()) {
            return Err(shape_err("gather", format!("row {bad} out of {}", xv.rows())));
        }
        let mut out = Tensor::zeros(idx.len(), cols);
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(xv.row(i));
        }
        let rg = self.rg(x);
        Ok(self.push(out, rg, Op::Gather { x, idx }))
    }

    /// Column-wise maximum over each row group. Backward routes the gradient
    /// to the first row attaining the maximum. Empty groups produce zeros.
    pub fn max_over_set(&mut self, x: Var, seg: &Segments) -> Result<Var> {
        let xv = self.value(x);
        if seg.total() != xv.rows() {
            return Err(shape_err("max_over_set", format!("{} rows vs {} segmented", xv.rows(), seg.total())));
        }
        let cols = xv.cols();
        let mut out = Tensor::zeros(seg.groups(), cols);
        let mut argmax = vec![usize::MAX; seg.groups() * cols];
        for g in 0..seg.groups() {
            for r in seg.range(g) {
                let row = xv.row(r);
                for c in 0..cols {
                    let slot = g * cols + c;
                    if argmax[slot] == usize::MAX || row[c] > out.data()[slot] {
                        out.data_mut()[slot] = row[c];
                        argmax[slot] = r;
                    }
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out, rg, Op::MaxOverSet { x, argmax }))
    }

    /// `out[g] = Σ_{e in g} w[e] · x[e]` with `w: E×1`. The weights receive a
    /// gradient only if they themselves require one.
    pub fn sum_weighted(&mut self, w: Var, x: Var, seg: Rc<Segments>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.shape() != [xv.rows(), 1] || seg.total() != xv.rows() {
            return Err(shape_err(
                "sum_weighted",
                format!("x {:?}, w {:?}, {} segmented rows", xv.shape(), wv.shape(), seg.total()),
            ));
        }
        let cols = xv.cols();
        let mut out = Tensor::zeros(seg.groups(), cols);
        for g in 0..seg.groups() {
            for e in seg.range(g) {
                let we = wv.data()[e];
                let src = xv.row(e);
                for (o, s) in out.row_mut(g).iter_mut().zip(src) {
                    *o += we * s;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(out, rg, Op::SumWeighted { x, w, seg }))
    }

    /// `out[r] = s[r] · b` with `s: n×1`, `b: 1×m`.
    pub fn scaled_bias(&mut self, s: Var, b: Var) -> Result<Var> {
        let (sv, bv) = (self.value(s), self.value(b));
        if sv.cols() != 1 || bv.rows() != 1 {
            return Err(shape_err("scaled_bias", format!("s {:?}, b {:?}", sv.shape(), bv.shape())));
        }
        let mut out = Tensor::zeros(sv.rows(), bv.cols());
        for r in 0..sv.rows() {
            let k = sv.data()[r];
            for (o, bb) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o = k * bb;
            }
        }
        let rg = self.rg(s) || self.rg(b);
        Ok(self.push(out, rg, Op::ScaledBias { s, b }))
    }

    /// Per-row cosine window `½(cos(π‖d‖/r) + 1)` for `‖d‖ ≤ r`, else 0.
    pub fn cosine_weight(&mut self, d: Var, r: f64) -> Result<Var> {
        if !(r > 0.0) {
            return Err(shape_err("cosine_weight", format!("radius {r} must be positive")));
        }
        let dv = self.value(d);
        let mut out = Tensor::zeros(dv.rows(), 1);
        for i in 0..dv.rows() {
            let len = dv.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            out.data_mut()[i] = cosine_window(len, r);
        }
        let rg = self.rg(d);
        Ok(self.push(out, rg, Op::CosineWeight { d, r }))
    }

    /// Weighted sum of per-edge hidden units:
    ///
    /// `out[g] = Σ_{e in g} weights[e] · relu(table[idx[e]] + W_off · offsets[e])`
    ///
    /// This is a linear layer on `[offset ; table row]` followed by ReLU and a
    /// weighted set sum, with the table half of the product hoisted out of the
    /// per-edge loop. Intermediate activations are recomputed in backward.
    pub fn neighbor_aggregate(
        &mut self,
        table: Var,
        offsets: Var,
        w_off: Var,
        weights: Var,
        idx: Rc<Vec<usize>>,
        seg: Rc<Segments>,
    ) -> Result<Var> {
        let (tv, ov, wv, ev) = (
            self.value(table),
            self.value(offsets),
            self.value(w_off),
            self.value(weights),
        );
        let h = tv.cols();
        let dim = ov.cols();
        let edges = ov.rows();
        if wv.shape() != [h, dim]
            || ev.shape() != [edges, 1]
            || idx.len() != edges
            || seg.total() != edges
            || idx.iter().any(|&i| i >= tv.rows())
        {
            return Err(shape_err(
                "neighbor_aggregate",
                format!(
                    "table {:?}, offsets {:?}, W {:?}, weights {:?}, {} indices, {} segmented",
                    tv.shape(),
                    ov.shape(),
                    wv.shape(),
                    ev.shape(),
                    idx.len(),
                    seg.total()
                ),
            ));
        }
        let mut out = Tensor::zeros(seg.groups(), h);
        let wt = transpose(wv);
        let mut z = vec![0.0; h];
        for g in 0..seg.groups() {
            let acc = out.row_mut(g);
            for e in seg.range(g) {
                edge_preact(tv.row(idx[e]), ov.row(e), &wt, &mut z);
                let we = ev.data()[e];
                for (a, zz) in acc.iter_mut().zip(&z) {
                    *a += we * zz.max(0.0);
                }
            }
        }
        let rg = self.rg(table) || self.rg(offsets) || self.rg(w_off) || self.rg(weights);
        Ok(self.push(
            out,
            rg,
            Op::NeighborAggregate(Box::new(Aggregate {
                table,
                offsets,
                w_off,
                weights,
                idx,
                seg,
            })),
        ))
    }

    /// Mean over rows of the squared row difference: `(1/n) Σᵢ ‖predᵢ − targetᵢ‖²`.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (pv, tv) = (self.value(pred), self.value(target));
        if pv.shape() != tv.shape() || pv.rows() == 0 {
            return Err(shape_err("mse", format!("{:?} vs {:?}", pv.shape(), tv.shape())));
        }
        let s: f64 = pv.data().iter().zip(tv.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let rows = pv.rows() as f64;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(s / rows), rg, Op::Mse { pred, target }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), rg, Op::Sum(x))
    }

    /// Accumulate `∂loss/∂p` into every parameter reachable from `loss` and
    /// keep gradients for inputs created with [`Tape::variable`].
    pub fn backward(&mut self, loss: Var, params: &mut ParameterSet) -> Result<()> {
        if self.value(loss).shape() != [1, 1] {
            return Err(Error::invalid_arg(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.propagate(id, &g, &mut grads)?;
            if let Op::Param(name) = &self.nodes[id].op {
                if let Some(p) = params.get_mut(name) {
                    p.grad.add_assign(&g);
                }
            }
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &self.nodes[id].op {
            Op::Leaf | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, din, dout) = (xv.rows(), xv.cols(), wv.rows());
                if self.rg(*x) {
                    let mut dx = Tensor::zeros(n, din);
                    gemm(n, dout, din, g.data(), false, wv.data(), false, 0.0, dx.data_mut());
                    self.accumulate(grads, *x, dx);
                }
                if self.rg(*w) {
                    let mut dw = Tensor::zeros(dout, din);
                    gemm(dout, n, din, g.data(), true, xv.data(), false, 0.0, dw.data_mut());
                    self.accumulate(grads, *w, dw);
                }
                if let Some(b) = b {
                    if self.rg(*b) {
                        let mut db = Tensor::zeros(1, dout);
                        for r in 0..n {
                            for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                        self.accumulate(grads, *b, db);
                    }
                }
            }
            Op::Relu(x) => {
                let mut dx = g.clone();
                for (d, y) in dx.data_mut().iter_mut().zip(self.nodes[id].value.data()) {
                    let keep = 0u64.wrapping_sub((*y > 0.0) as u64);
                    *d = f64::from_bits(d.to_bits() & keep);
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Concat(xs) => {
                let mut c0 = 0;
                for v in xs {
                    let cols = self.value(*v).cols();
                    if self.rg(*v) {
                        let mut part = Tensor::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            part.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + cols]);
                        }
                        self.accumulate(grads, *v, part);
                    }
                    c0 += cols;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*b) {
                    let mut neg = g.clone();
                    neg.data_mut().iter_mut().for_each(|v| *v = -*v);
                    self.accumulate(grads, *b, neg);
                }
            }
            Op::Scale(x, f) => {
                let mut dx = g.clone();
                dx.data_mut().iter_mut().for_each(|v| *v *= f);
                self.accumulate(grads, *x, dx);
            }
            Op::Gather { x, idx } => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for (r, &i) in idx.iter().enumerate() {
                    for (d, v) in dx.row_mut(i).iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::MaxOverSet { x, argmax } => {
                let xv = self.value(*x);
                let cols = xv.cols();
                let mut dx = Tensor::zeros(xv.rows(), cols);
                for (slot, &src) in argmax.iter().enumerate() {
                    if src != usize::MAX {
                        dx.data_mut()[src * cols + slot % cols] += g.data()[slot];
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::SumWeighted { x, w, seg } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                if self.rg(*x) {
                    let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                    for gi in 0..seg.groups() {
                        for e in seg.range(gi) {
                            let we = wv.data()[e];
                            for (d, v) in dx.row_mut(e).iter_mut().zip(g.row(gi)) {
                                *d = we * v;
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                if self.rg(*w) {
                    let mut dw = Tensor::zeros(wv.rows(), 1);
                    for gi in 0..seg.groups() {
                        for e in seg.range(gi) {
                            dw.data_mut()[e] = dotp(xv.row(e), g.row(gi));
                        }
                    }
                    self.accumulate(grads, *w, dw);
                }
            }
            Op::ScaledBias { s, b } => {
                let (sv, bv) = (self.value(*s), self.value(*b));
                if self.rg(*s) {
                    let mut ds = Tensor::zeros(sv.rows(), 1);
                    for r in 0..sv.rows() {
                        ds.data_mut()[r] = dotp(g.row(r), bv.data());
                    }
                    self.accumulate(grads, *s, ds);
                }
                if self.rg(*b) {
                    let mut db = Tensor::zeros(1, bv.cols());
                    for r in 0..sv.rows() {
                        let k = sv.data()[r];
                        for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += k * v;
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::CosineWeight { d, r } => {
                let dv = self.value(*d);
                let mut dd = Tensor::zeros(dv.rows(), dv.cols());
                for i in 0..dv.rows() {
                    let row = dv.row(i);
                    let len = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if len == 0.0 || len > *r {
                        continue;
                    }
                    // d/dd ½(cos(π len/r)+1) = −(π/2r) sin(π len/r) · d/len
                    let k = -0.5 * PI / r * (PI * len / r).sin() / len * g.data()[i];
                    for (o, v) in dd.row_mut(i).iter_mut().zip(row) {
                        *o = k * v;
                    }
                }
                self.accumulate(grads, *d, dd);
            }
            Op::NeighborAggregate(agg) => self.aggregate_backward(agg, g, grads),
            Op::Mse { pred, target } => {
                let (pv, tv) = (self.value(*pred), self.value(*target));
                let k = 2.0 * g.item() / pv.rows() as f64;
                let mut dp = pv.clone();
                for (d, t) in dp.data_mut().iter_mut().zip(tv.data()) {
                    *d = k * (*d - t);
                }
                if self.rg(*target) {
                    let mut dt = dp.clone();
                    dt.data_mut().iter_mut().for_each(|v| *v = -*v);
                    self.accumulate(grads, *target, dt);
                }
                self.accumulate(grads, *pred, dp);
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                self.accumulate(grads, *x, Tensor::filled(xv.rows(), xv.cols(), g.item()));
            }
        }
        Ok(())
    }

    fn aggregate_backward(&self, agg: &Aggregate, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let tv = self.value(agg.table);
        let ov = self.value(agg.offsets);
        let wv = self.value(agg.w_off);
        let ev = self.value(agg.weights);
        let (h, dim) = (wv.rows(), wv.cols());
        let wt = transpose(wv);

        // All four gradients are cheap next to the recomputed activations, so
        // they are always formed and only handed out where required. The
        // offset weight gradient is accumulated transposed (dim × h).
        let mut d_table = Tensor::zeros(tv.rows(), h);
        let mut d_off = Tensor::zeros(ov.rows(), dim);
        let mut d_wt = vec![0.0; dim * h];
        let mut d_weights = Tensor::zeros(ev.rows(), 1);

        let mut z = vec![0.0; h];
        let mut gz = vec![0.0; h];
        for gi in 0..agg.seg.groups() {
            let gout = g.row(gi);
            for e in agg.seg.range(gi) {
                let src = agg.idx[e];
                let off = ov.row(e);
                edge_preact(tv.row(src), off, &wt, &mut z);
                let we = ev.data()[e];
                for ((o, &zj), &gj) in gz.iter_mut().zip(&z).zip(gout) {
                    // bit mask instead of a branch: the sign pattern is random
                    let keep = 0u64.wrapping_sub((zj > 0.0) as u64);
                    *o = f64::from_bits((we * gj).to_bits() & keep);
                }
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
                d_weights.data_mut()[e] = dotp(&z, gout);
                for (d, v) in d_table.row_mut(src).iter_mut().zip(&gz) {
                    *d += v;
                }
                let doff = d_off.row_mut(e);
                for c in 0..dim {
                    let oc = off[c];
                    for (d, v) in d_wt[c * h..(c + 1) * h].iter_mut().zip(&gz) {
                        *d += v * oc;
                    }
                    doff[c] = dotp(&gz, &wt[c * h..(c + 1) * h]);
                }
            }
        }
        let mut d_w = Tensor::zeros(h, dim);
        for j in 0..h {
            for c in 0..dim {
                d_w.data_mut()[j * dim + c] = d_wt[c * h + j];
            }
        }
        self.accumulate(grads, agg.table, d_table);
        self.accumulate(grads, agg.offsets, d_off);
        self.accumulate(grads, agg.w_off, d_w);
        self.accumulate(grads, agg.weights, d_weights);
    }
}

/// Row-major `dim × h` copy of an `h × dim` matrix.
fn transpose(w: &Tensor) -> Vec<f64> {
    let (h, dim) = (w.rows(), w.cols());
    let mut t = vec![0.0; h * dim];
    for j in 0..h {
        for c in 0..dim {
            t[c * h + j] = w.data()[j * dim + c];
        }
    }
    t
}

/// `z = table_row + W · offset` with `W` given transposed (`dim × h`).
#[inline]
fn edge_preact(table_row: &[f64], offset: &[f64], wt: &[f64], z: &mut [f64]) {
    let h = z.len();
    z.copy_from_slice(table_row);
    for (c, &oc) in offset.iter().enumerate() {
        for (zj, w) in z.iter_mut().zip(&wt[c * h..(c + 1) * h]) {
            *zj += w * oc;
        }
    }
}

/// Dot product with four independent partial sums.
#[inline]
fn dotp(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `½(cos(π·dist/r) + 1)` inside the radius, 0 outside.
pub fn cosine_window(dist: f64, r: f64) -> f64 {
    if dist > r {
        0.0
    } else {
        0.5 * ((PI * dist / r).cos() + 1.0)
    }
}
