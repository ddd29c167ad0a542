//! Reverse-mode differentiation over the engine's fixed operator set.
//!
//! A [`Tape`] records the forward computation (dense layers, activations,
//! neighbor aggregation over a CSR adjacency, segment reductions, batch
//! normalization, softmax cross-entropy) together with the intermediates the
//! backward pass needs. [`Tape::backward`] then produces a gradient for every
//! trainable parameter touched in the forward; untouched parameters get zero.
//!
//! All reductions accumulate in index order, so gradients are bit-reproducible.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{matmul, matmul_tn, Matrix};
use crate::{Error, Result};

/// Trainable parameter store; ids are stable handles used by tapes and Adam.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct Params {
    mats: Vec<Matrix>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParamId(pub usize);

impl Params {
    pub fn new() -> Self {
        Params::default()
    }

    pub fn add(&mut self, m: Matrix) -> ParamId {
        self.mats.push(m);
        ParamId(self.mats.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.mats[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.mats[id.0]
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Matrix> {
        self.mats.iter()
    }

    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.mats
            .iter()
            .map(|m| Matrix::zeros(m.rows, m.cols))
            .collect()
    }
}

/// Elementwise activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    /// Exact step function with sigma(0) = 1; gradient defined as zero
    /// everywhere (used by the analytic networks, never trained).
    Heaviside,
}

impl Activation {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Heaviside => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Compressed neighbor lists for a batch: neighbors of row `i` are
/// `targets[offsets[i]..offsets[i+1]]`.
#[derive(Clone, Debug)]
pub struct Csr {
    pub offsets: Vec<u32>,
    pub targets: Vec<u32>,
}

impl Csr {
    pub fn row_count(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }
}

/// Neighborhood aggregation flavor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum AggKind {
    Sum,
    /// Mean over present neighbors; a node with no neighbors aggregates to 0.
    Mean,
    /// Elementwise max over present neighbors; empty aggregates to 0.
    Max,
}

/// Weighted scatter of input rows into `out_rows` groups:
/// `out[groups[i]] += weights[i] * x[i]`. Covers graph pooling, per-run
/// pooling, and alive-count-normalized run aggregation.
#[derive(Clone, Debug)]
pub struct ScatterPlan {
    pub groups: Vec<u32>,
    pub weights: Vec<f64>,
    pub out_rows: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub usize);

struct BnSaved {
    xhat: Matrix,
    inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var_unbiased: Vec<f64>,
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul {
        x: NodeId,
        w: NodeId,
    },
    AddBias {
        x: NodeId,
        b: NodeId,
    },
    /// a + c * b
    AddScaled {
        a: NodeId,
        b: NodeId,
        c: f64,
    },
    AddN {
        xs: Vec<NodeId>,
    },
    Activation {
        x: NodeId,
        kind: Activation,
    },
    NeighborAgg {
        x: NodeId,
        kind: AggKind,
        csr: Rc<Csr>,
        /// Input row feeding each output cell, for max routing.
        argmax: Option<Vec<u32>>,
    },
    Scatter {
        x: NodeId,
        plan: Rc<ScatterPlan>,
    },
    Gather {
        x: NodeId,
        idx: Rc<Vec<u32>>,
    },
    ConcatCols {
        xs: Vec<NodeId>,
    },
    BatchNormTrain {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        saved: BnSaved,
    },
    BatchNormEval {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        inv_std: Vec<f64>,
        mean: Vec<f64>,
    },
    SoftmaxCe {
        logits: NodeId,
        labels: Rc<Vec<u32>>,
        weights: Rc<Vec<f64>>,
        probs: Matrix,
    },
    Combine {
        parts: Vec<(NodeId, f64)>,
    },
}

struct TapeNode {
    value: Matrix,
    op: Op,
}

/// Recorded forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(TapeNode { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// A constant input (no gradient is reported for it).
    pub fn leaf(&mut self, m: Matrix) -> NodeId {
        self.push(m, Op::Leaf)
    }

    /// Brings a parameter onto the tape.
    pub fn param(&mut self, params: &Params, id: ParamId) -> NodeId {
        self.push(params.get(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let v = matmul(self.value(x), self.value(w))?;
        Ok(self.push(v, Op::MatMul { x, w }))
    }

    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows != 1 || bv.cols != xv.cols {
            return Err(Error::DimensionMismatch("bias shape".into()));
        }
        let mut out = xv.clone();
        for i in 0..out.rows {
            let row = out.row_mut(i);
            for j in 0..row.len() {
                row[j] += bv.data[j];
            }
        }
        Ok(self.push(out, Op::AddBias { x, b }))
    }

    /// a + c * b (same shapes).
    pub fn add_scaled(&mut self, a: NodeId, b: NodeId, c: f64) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows != bv.rows || av.cols != bv.cols {
            return Err(Error::DimensionMismatch("add_scaled shapes".into()));
        }
        let mut out = av.clone();
        for (o, &x) in out.data.iter_mut().zip(&bv.data) {
            *o += c * x;
        }
        Ok(self.push(out, Op::AddScaled { a, b, c }))
    }

    pub fn add_n(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = self.value(xs[0]).clone();
        let mut out = first;
        for &x in &xs[1..] {
            let xv = self.value(x);
            if xv.rows != out.rows || xv.cols != out.cols {
                return Err(Error::DimensionMismatch("add_n shapes".into()));
            }
            for (o, &v) in out.data.iter_mut().zip(&xv.data) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::AddN { xs: xs.to_vec() }))
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> NodeId {
        if kind == Activation::Identity {
            return x;
        }
        let xv = self.value(x);
        let mut out = xv.clone();
        for v in &mut out.data {
            *v = kind.apply(*v);
        }
        self.push(out, Op::Activation { x, kind })
    }

    pub fn neighbor_agg(&mut self, x: NodeId, kind: AggKind, csr: Rc<Csr>) -> Result<NodeId> {
        let xv = self.value(x);
        if csr.row_count() != xv.rows {
            return Err(Error::DimensionMismatch("csr rows".into()));
        }
        let cols = xv.cols;
        let mut out = Matrix::zeros(xv.rows, cols);
        let mut argmax = None;
        match kind {
            AggKind::Sum => {
                for i in 0..xv.rows {
                    let orow = out.row_mut(i);
                    for &j in csr.neighbors(i) {
                        let xrow = &xv.data[j as usize * cols..(j as usize + 1) * cols];
                        for (o, &v) in orow.iter_mut().zip(xrow) {
                            *o += v;
                        }
                    }
                }
            }
            AggKind::Mean => {
                for i in 0..xv.rows {
                    let nbrs = csr.neighbors(i);
                    if nbrs.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / nbrs.len() as f64;
                    let orow = out.row_mut(i);
                    for &j in nbrs {
                        let xrow = &xv.data[j as usize * cols..(j as usize + 1) * cols];
                        for (o, &v) in orow.iter_mut().zip(xrow) {
                            *o += inv * v;
                        }
                    }
                }
            }
            AggKind::Max => {
                let mut routes = vec![u32::MAX; xv.rows * cols];
                for i in 0..xv.rows {
                    let nbrs = csr.neighbors(i);
                    for (c, route) in routes[i * cols..(i + 1) * cols].iter_mut().enumerate() {
                        let mut best = f64::NEG_INFINITY;
                        for &j in nbrs {
                            let v = xv.get(j as usize, c);
                            if v > best {
                                best = v;
                                *route = j;
                            }
                        }
                        out.set(i, c, if nbrs.is_empty() { 0.0 } else { best });
                    }
                }
                argmax = Some(routes);
            }
        }
        Ok(self.push(
            out,
            Op::NeighborAgg {
                x,
                kind,
                csr,
                argmax,
            },
        ))
    }

    pub fn scatter(&mut self, x: NodeId, plan: Rc<ScatterPlan>) -> Result<NodeId> {
        let xv = self.value(x);
        if plan.groups.len() != xv.rows || plan.weights.len() != xv.rows {
            return Err(Error::DimensionMismatch("scatter plan rows".into()));
        }
        let cols = xv.cols;
        let mut out = Matrix::zeros(plan.out_rows, cols);
        for i in 0..xv.rows {
            let w = plan.weights[i];
            if w == 0.0 {
                continue;
            }
            let g = plan.groups[i] as usize;
            let xrow = &xv.data[i * cols..(i + 1) * cols];
            let orow = &mut out.data[g * cols..(g + 1) * cols];
            for (o, &v) in orow.iter_mut().zip(xrow) {
                *o += w * v;
            }
        }
        Ok(self.push(out, Op::Scatter { x, plan }))
    }

    pub fn gather(&mut self, x: NodeId, idx: Rc<Vec<u32>>) -> Result<NodeId> {
        let xv = self.value(x);
        let cols = xv.cols;
        let mut out = Matrix::zeros(idx.len(), cols);
        for (e, &i) in idx.iter().enumerate() {
            if i as usize >= xv.rows {
                return Err(Error::DimensionMismatch("gather index".into()));
            }
            out.row_mut(e).copy_from_slice(xv.row(i as usize));
        }
        Ok(self.push(out, Op::Gather { x, idx }))
    }

    /// Concatenates matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let rows = self.value(xs[0]).rows;
        if xs.iter().any(|&x| self.value(x).rows != rows) {
            return Err(Error::DimensionMismatch("concat row counts".into()));
        }
        let cols: usize = xs.iter().map(|&x| self.value(x).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let orow = out.row_mut(i);
            let mut at = 0;
            for &x in xs {
                let xv = &self.nodes[x.0].value;
                orow[at..at + xv.cols].copy_from_slice(xv.row(i));
                at += xv.cols;
            }
        }
        Ok(self.push(out, Op::ConcatCols { xs: xs.to_vec() }))
    }

    /// Batch normalization over rows. In train mode, normalizes with batch
    /// statistics and exposes them (mean, unbiased var) for the caller's
    /// running-stat update; in eval mode, uses the provided frozen stats.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
        frozen: Option<(&[f64], &[f64])>,
    ) -> Result<NodeId> {
        let xv = self.value(x).clone();
        let g = self.value(gamma).clone();
        let b = self.value(beta).clone();
        let cols = xv.cols;
        if g.cols != cols || b.cols != cols || g.rows != 1 || b.rows != 1 {
            return Err(Error::DimensionMismatch("batch norm params".into()));
        }
        match frozen {
            Some((mean, var)) => {
                let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / libm::sqrt(v + eps)).collect();
                let mut out = Matrix::zeros(xv.rows, cols);
                for i in 0..xv.rows {
                    let xrow = xv.row(i);
                    let orow = out.row_mut(i);
                    for j in 0..cols {
                        orow[j] = g.data[j] * (xrow[j] - mean[j]) * inv_std[j] + b.data[j];
                    }
                }
                Ok(self.push(
                    out,
                    Op::BatchNormEval {
                        x,
                        gamma,
                        beta,
                        inv_std,
                        mean: mean.to_vec(),
                    },
                ))
            }
            None => {
                let rows = xv.rows.max(1) as f64;
                let mut mean = vec![0.0; cols];
                for i in 0..xv.rows {
                    for (m, &v) in mean.iter_mut().zip(xv.row(i)) {
                        *m += v;
                    }
                }
                for m in &mut mean {
                    *m /= rows;
                }
                let mut var = vec![0.0; cols];
                for i in 0..xv.rows {
                    for (j, &v) in xv.row(i).iter().enumerate() {
                        let d = v - mean[j];
                        var[j] += d * d;
                    }
                }
                for v in &mut var {
                    *v /= rows;
                }
                let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / libm::sqrt(v + eps)).collect();
                let mut xhat = Matrix::zeros(xv.rows, cols);
                let mut out = Matrix::zeros(xv.rows, cols);
                for i in 0..xv.rows {
                    let xrow = xv.row(i);
                    for j in 0..cols {
                        let h = (xrow[j] - mean[j]) * inv_std[j];
                        xhat.set(i, j, h);
                        out.set(i, j, g.data[j] * h + b.data[j]);
                    }
                }
                let denom = if xv.rows > 1 { (xv.rows - 1) as f64 } else { 1.0 };
                let var_unbiased: Vec<f64> = var.iter().map(|&v| v * rows / denom).collect();
                Ok(self.push(
                    out,
                    Op::BatchNormTrain {
                        x,
                        gamma,
                        beta,
                        saved: BnSaved {
                            xhat,
                            inv_std,
                            batch_mean: mean,
                            batch_var_unbiased: var_unbiased,
                        },
                    },
                ))
            }
        }
    }

    /// Batch statistics recorded by a train-mode batch norm node.
    pub fn bn_batch_stats(&self, id: NodeId) -> Option<(&[f64], &[f64])> {
        match &self.nodes[id.0].op {
            Op::BatchNormTrain { saved, .. } => {
                Some((&saved.batch_mean, &saved.batch_var_unbiased))
            }
            _ => None,
        }
    }

    /// Weighted softmax cross-entropy; returns a scalar node holding
    /// `sum_i weights[i] * (-log softmax(logits[i])[labels[i]])`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: Rc<Vec<u32>>,
        weights: Rc<Vec<f64>>,
    ) -> Result<NodeId> {
        let lv = self.value(logits);
        if labels.len() != lv.rows || weights.len() != lv.rows {
            return Err(Error::DimensionMismatch("labels/weights rows".into()));
        }
        let cols = lv.cols;
        let mut probs = Matrix::zeros(lv.rows, cols);
        let mut total = 0.0;
        for i in 0..lv.rows {
            let row = lv.row(i);
            let label = labels[i] as usize;
            if label >= cols {
                return Err(Error::InvalidArgument("label out of range".into()));
            }
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for &v in row {
                z += libm::exp(v - m);
            }
            let log_z = m + libm::log(z);
            for (j, &v) in row.iter().enumerate() {
                probs.set(i, j, libm::exp(v - log_z));
            }
            total += weights[i] * (log_z - row[label]);
        }
        let value = Matrix::from_vec(1, 1, vec![total])?;
        Ok(self.push(
            value,
            Op::SoftmaxCe {
                logits,
                labels,
                weights,
                probs,
            },
        ))
    }

    /// Weighted sum of scalar nodes.
    pub fn combine(&mut self, parts: &[(NodeId, f64)]) -> Result<NodeId> {
        let mut total = 0.0;
        for &(id, c) in parts {
            let v = self.value(id);
            if v.rows != 1 || v.cols != 1 {
                return Err(Error::InvalidArgument("combine expects scalars".into()));
            }
            total += c * v.data[0];
        }
        let value = Matrix::from_vec(1, 1, vec![total])?;
        Ok(self.push(
            value,
            Op::Combine {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Reverse pass from a scalar loss node; returns one gradient per
    /// parameter in `params` (zeros for parameters the forward never read).
    pub fn backward(&self, loss: NodeId, params: &Params) -> Result<Vec<Matrix>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::InvalidArgument("loss node not on tape".into()));
        }
        let lv = &self.nodes[loss.0].value;
        if lv.rows != 1 || lv.cols != 1 {
            return Err(Error::InvalidArgument("loss must be scalar".into()));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![1.0])?);
        let mut param_grads = params.zeros_like();

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Param(pid) => {
                    let acc = &mut param_grads[pid.0];
                    for (a, &v) in acc.data.iter_mut().zip(&g.data) {
                        *a += v;
                    }
                }
                Op::MatMul { x, w } => {
                    let wt = self.nodes[w.0].value.transpose();
                    let dx = matmul(&g, &wt)?;
                    accumulate(&mut grads, *x, dx);
                    let dw = matmul_tn(&self.nodes[x.0].value, &g)?;
                    accumulate(&mut grads, *w, dw);
                }
                Op::AddBias { x, b } => {
                    let mut db = Matrix::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for (j, &v) in g.row(i).iter().enumerate() {
                            db.data[j] += v;
                        }
                    }
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *x, g);
                }
                Op::AddScaled { a, b, c } => {
                    let mut db = g.clone();
                    for v in &mut db.data {
                        *v *= c;
                    }
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *a, g);
                }
                Op::AddN { xs } => {
                    for &x in xs {
                        accumulate(&mut grads, x, g.clone());
                    }
                }
                Op::Activation { x, kind } => match kind {
                    Activation::Identity => accumulate(&mut grads, *x, g),
                    Activation::Relu => {
                        let mut dx = g;
                        for (v, &y) in dx.data.iter_mut().zip(&node.value.data) {
                            if y <= 0.0 {
                                *v = 0.0;
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                    // Zero derivative almost everywhere.
                    Activation::Heaviside => {}
                },
                Op::NeighborAgg {
                    x,
                    kind,
                    csr,
                    argmax,
                } => {
                    let cols = g.cols;
                    let xrows = self.nodes[x.0].value.rows;
                    let mut dx = Matrix::zeros(xrows, cols);
                    match kind {
                        AggKind::Sum => {
                            for i in 0..g.rows {
                                let grow = g.row(i);
                                for &j in csr.neighbors(i) {
                                    let drow =
                                        &mut dx.data[j as usize * cols..(j as usize + 1) * cols];
                                    for (d, &v) in drow.iter_mut().zip(grow) {
                                        *d += v;
                                    }
                                }
                            }
                        }
                        AggKind::Mean => {
                            for i in 0..g.rows {
                                let nbrs = csr.neighbors(i);
                                if nbrs.is_empty() {
                                    continue;
                                }
                                let inv = 1.0 / nbrs.len() as f64;
                                let grow = g.row(i);
                                for &j in nbrs {
                                    let drow =
                                        &mut dx.data[j as usize * cols..(j as usize + 1) * cols];
                                    for (d, &v) in drow.iter_mut().zip(grow) {
                                        *d += inv * v;
                                    }
                                }
                            }
                        }
                        AggKind::Max => {
                            let routes = argmax.as_ref().expect("max agg saves routes");
                            for i in 0..g.rows {
                                for (c, &gv) in g.row(i).iter().enumerate() {
                                    let j = routes[i * cols + c];
                                    if j != u32::MAX {
                                        dx.data[j as usize * cols + c] += gv;
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Scatter { x, plan } => {
                    let cols = g.cols;
                    let mut dx = Matrix::zeros(plan.groups.len(), cols);
                    for i in 0..plan.groups.len() {
                        let w = plan.weights[i];
                        if w == 0.0 {
                            continue;
                        }
                        let grow = g.row(plan.groups[i] as usize);
                        let drow = dx.row_mut(i);
                        for (d, &v) in drow.iter_mut().zip(grow) {
                            *d += w * v;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Gather { x, idx } => {
                    let cols = g.cols;
                    let mut dx = Matrix::zeros(self.nodes[x.0].value.rows, cols);
                    for (e, &i) in idx.iter().enumerate() {
                        let drow = &mut dx.data[i as usize * cols..(i as usize + 1) * cols];
                        for (d, &v) in drow.iter_mut().zip(g.row(e)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::ConcatCols { xs } => {
                    let mut at = 0;
                    for &x in xs {
                        let xv = &self.nodes[x.0].value;
                        let mut dx = Matrix::zeros(xv.rows, xv.cols);
                        for i in 0..xv.rows {
                            dx.row_mut(i)
                                .copy_from_slice(&g.row(i)[at..at + xv.cols]);
                        }
                        at += xv.cols;
                        accumulate(&mut grads, x, dx);
                    }
                }
                Op::BatchNormTrain {
                    x,
                    gamma,
                    beta,
                    saved,
                } => {
                    let rows = g.rows;
                    let cols = g.cols;
                    let gval = &self.nodes[gamma.0].value;
                    let mut dgamma = Matrix::zeros(1, cols);
                    let mut dbeta = Matrix::zeros(1, cols);
                    let mut sum_dy = vec![0.0; cols];
                    let mut sum_dy_xhat = vec![0.0; cols];
                    for i in 0..rows {
                        let grow = g.row(i);
                        let hrow = saved.xhat.row(i);
                        for j in 0..cols {
                            dbeta.data[j] += grow[j];
                            dgamma.data[j] += grow[j] * hrow[j];
                            sum_dy[j] += grow[j];
                            sum_dy_xhat[j] += grow[j] * hrow[j];
                        }
                    }
                    let n = rows as f64;
                    let mut dx = Matrix::zeros(rows, cols);
                    for i in 0..rows {
                        let grow = g.row(i);
                        let hrow = saved.xhat.row(i);
                        let drow = dx.row_mut(i);
                        for j in 0..cols {
                            drow[j] = gval.data[j] * saved.inv_std[j]
                                * (grow[j] - sum_dy[j] / n - hrow[j] * sum_dy_xhat[j] / n);
                        }
                    }
                    accumulate(&mut grads, *gamma, dgamma);
                    accumulate(&mut grads, *beta, dbeta);
                    accumulate(&mut grads, *x, dx);
                }
                Op::BatchNormEval {
                    x,
                    gamma,
                    beta,
                    inv_std,
                    mean,
                } => {
                    let cols = g.cols;
                    let gval = &self.nodes[gamma.0].value;
                    let xval = &self.nodes[x.0].value;
                    let mut dgamma = Matrix::zeros(1, cols);
                    let mut dbeta = Matrix::zeros(1, cols);
                    let mut dx = Matrix::zeros(g.rows, cols);
                    for i in 0..g.rows {
                        let grow = g.row(i);
                        let xrow = xval.row(i);
                        let drow = dx.row_mut(i);
                        for j in 0..cols {
                            dbeta.data[j] += grow[j];
                            dgamma.data[j] += grow[j] * (xrow[j] - mean[j]) * inv_std[j];
                            drow[j] = grow[j] * gval.data[j] * inv_std[j];
                        }
                    }
                    accumulate(&mut grads, *gamma, dgamma);
                    accumulate(&mut grads, *beta, dbeta);
                    accumulate(&mut grads, *x, dx);
                }
                Op::SoftmaxCe {
                    logits,
                    labels,
                    weights,
                    probs,
                } => {
                    let upstream = g.data[0];
                    let mut dl = probs.clone();
                    for i in 0..dl.rows {
                        let w = weights[i] * upstream;
                        let row = dl.row_mut(i);
                        for v in row.iter_mut() {
                            *v *= w;
                        }
                        row[labels[i] as usize] -= w;
                    }
                    accumulate(&mut grads, *logits, dl);
                }
                Op::Combine { parts } => {
                    let upstream = g.data[0];
                    for &(id, c) in parts {
                        let dv = Matrix::from_vec(1, 1, vec![c * upstream])?;
                        accumulate(&mut grads, id, dv);
                    }
                }
            }
        }
        Ok(param_grads)
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut grads[id.0] {
        Some(acc) => {
            for (a, &v) in acc.data.iter_mut().zip(&g.data) {
                *a += v;
            }
        }
        slot => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    fn finite_diff<F: Fn(&Params) -> f64>(f: &F, params: &Params, id: ParamId) -> Matrix {
        let h = 1e-4;
        let base = params.get(id);
        let mut out = Matrix::zeros(base.rows, base.cols);
        for k in 0..base.data.len() {
            let mut plus = params.clone();
            plus.get_mut(id).data[k] += h;
            let mut minus = params.clone();
            minus.get_mut(id).data[k] -= h;
            out.data[k] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        out
    }

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        for (i, (x, y)) in a.data.iter().zip(&b.data).enumerate() {
            let denom = x.abs().max(y.abs()).max(1e-6);
            assert!(
                ((x - y) / denom).abs() < tol,
                "entry {i}: {x} vs {y} (rel tol {tol})"
            );
        }
    }

    #[test]
    fn dense_layer_gradient_matches_closed_form() {
        // loss = sum over quadratic CE-free form: use softmax CE with 1 row instead.
        let mut params = Params::new();
        let w = params.add(Matrix::from_vec(2, 2, vec![0.3, -0.2, 0.5, 0.7]).unwrap());
        let b = params.add(Matrix::from_vec(1, 2, vec![0.1, -0.4]).unwrap());
        let x = Matrix::from_vec(3, 2, vec![1.0, 2.0, -0.5, 0.3, 0.8, -1.2]).unwrap();
        let labels = Rc::new(vec![0u32, 1, 0]);
        let weights = Rc::new(vec![1.0 / 3.0; 3]);

        let eval = |ps: &Params| -> f64 {
            let mut tape = Tape::new();
            let xin = tape.leaf(x.clone());
            let wn = tape.param(ps, w);
            let bn = tape.param(ps, b);
            let y = tape.matmul(xin, wn).unwrap();
            let y = tape.add_bias(y, bn).unwrap();
            let y = tape.activation(y, Activation::Relu);
            let loss = tape
                .softmax_cross_entropy(y, labels.clone(), weights.clone())
                .unwrap();
            tape.value(loss).data[0]
        };

        let mut tape = Tape::new();
        let xin = tape.leaf(x.clone());
        let wn = tape.param(&params, w);
        let bn = tape.param(&params, b);
        let y = tape.matmul(xin, wn).unwrap();
        let y = tape.add_bias(y, bn).unwrap();
        let y = tape.activation(y, Activation::Relu);
        let loss = tape
            .softmax_cross_entropy(y, labels.clone(), weights.clone())
            .unwrap();
        let grads = tape.backward(loss, &params).unwrap();

        assert_close(&grads[w.0], &finite_diff(&eval, &params, w), 1e-3);
        assert_close(&grads[b.0], &finite_diff(&eval, &params, b), 1e-3);
    }

    #[test]
    fn untouched_parameters_get_zero_gradient() {
        let mut params = Params::new();
        let w = params.add(Matrix::from_vec(1, 1, vec![2.0]).unwrap());
        let unused = params.add(Matrix::from_vec(1, 1, vec![5.0]).unwrap());
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_vec(1, 1, vec![3.0]).unwrap());
        let wn = tape.param(&params, w);
        let y = tape.matmul(x, wn).unwrap();
        let loss = tape
            .softmax_cross_entropy(y, Rc::new(vec![0]), Rc::new(vec![1.0]))
            .unwrap();
        let grads = tape.backward(loss, &params).unwrap();
        assert!(grads[unused.0].data.iter().all(|&g| g == 0.0));
        // Single-class softmax: CE identically 0, gradient 0 but present.
        assert_eq!(grads[w.0].rows, 1);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::zeros(2, 2));
        let params = Params::new();
        assert!(tape.backward(x, &params).is_err());
    }

    #[test]
    fn max_agg_routes_to_argmax_only() {
        let mut params = Params::new();
        // Node features as a trainable 3x1 matrix on a path 0-1-2.
        let x = params.add(Matrix::from_vec(3, 1, vec![1.0, 5.0, 9.0]).unwrap());
        let w = params.add(Matrix::from_vec(1, 2, vec![1.0, -1.0]).unwrap());
        let csr = Rc::new(Csr {
            offsets: vec![0, 1, 3, 4],
            targets: vec![1, 0, 2, 1],
        });
        let mut tape = Tape::new();
        let xin = tape.param(&params, x);
        let wn = tape.param(&params, w);
        let agg = tape.neighbor_agg(xin, AggKind::Max, csr).unwrap();
        // Max values: node0 <- node1 (5), node1 <- node2 (9), node2 <- node1 (5).
        assert_eq!(tape.value(agg).data, vec![5.0, 9.0, 5.0]);
        let logits = tape.matmul(agg, wn).unwrap();
        let loss = tape
            .softmax_cross_entropy(logits, Rc::new(vec![0, 0, 0]), Rc::new(vec![1.0; 3]))
            .unwrap();
        let grads = tape.backward(loss, &params).unwrap();
        let dx = &grads[x.0];
        // Node 0 is never an argmax; nodes 1 and 2 are.
        assert_eq!(dx.data[0], 0.0);
        assert!(dx.data[1] != 0.0 && dx.data[2] != 0.0);
    }
}
