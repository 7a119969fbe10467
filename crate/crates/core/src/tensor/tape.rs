use std::rc::Rc;

use super::{Matrix, Segments, SparseMatrix, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Rc<SparseMatrix>, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    MulCol(Var, Var),
    ScalarMul(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Abs(Var),
    Log(Var),
    Softplus(Var),
    ConcatCols(Var, Var),
    GatherRows(Var, Rc<Vec<usize>>),
    SegmentSum(Var, Rc<Segments>),
    SegmentMean(Var, Rc<Segments>, Vec<usize>),
    SegmentMax(Var, Rc<Segments>, Vec<usize>),
    Sum(Var),
    Mean(Var),
    CrossEntropy(Var, Rc<Vec<usize>>, Matrix),
    NormalizedProjection(Var, Var),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Wengert list of dense-matrix operations.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid reverse topological order for [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node on the tape.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; an exact zero matrix if `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn mismatch(op: &'static str, a: &Matrix, b: &Matrix) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    // log(1 + e^x) without overflow for large |x|.
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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(mismatch("matmul", va, vb));
        }
        let value = va.matmul(vb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn spmm(&mut self, a: &Rc<SparseMatrix>, x: Var) -> Result<Var, TensorError> {
        let value = a.matmul_dense(self.value(x))?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::SpMM(Rc::clone(a), x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("add", va, vb));
        }
        let value = va.zip_map(vb, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// `a + 1·row`, broadcasting a 1×c row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(mismatch("add_row", va, vr));
        }
        let mut value = va.clone();
        let bias = vr.row(0);
        for r in 0..value.rows() {
            for (x, b) in value.row_mut(r).iter_mut().zip(bias) {
                *x += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(value, Op::AddRow(a, row), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("sub", va, vb));
        }
        let value = va.zip_map(vb, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Row-wise scaling `a ⊙ col`: entry `(i, j)` is `a[i, j] * col[i]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var, TensorError> {
        let (va, vc) = (self.value(a), self.value(col));
        if vc.cols() != 1 || vc.rows() != va.rows() {
            return Err(mismatch("broadcast_mul", va, vc));
        }
        let mut value = va.clone();
        for r in 0..value.rows() {
            let s = vc.get(r, 0);
            value.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        let rg = self.rg(a) || self.rg(col);
        Ok(self.push(value, Op::MulCol(a, col), rg))
    }

    pub fn scalar_mul(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, |x| x * s, Op::ScalarMul(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        if let Some(&value) = self.value(a).data().iter().find(|&&x| !(x > 0.0)) {
            return Err(TensorError::NonPositiveLog { value });
        }
        Ok(self.unary(a, f64::ln, Op::Log(a)))
    }

    /// `log(1 + e^x)`, stable for any finite `x`.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(mismatch("concat_cols", va, vb));
        }
        let (ca, cb) = (va.cols(), vb.cols());
        let mut value = Matrix::zeros(va.rows(), ca + cb);
        for r in 0..va.rows() {
            let dst = value.row_mut(r);
            dst[..ca].copy_from_slice(va.row(r));
            dst[ca..].copy_from_slice(vb.row(r));
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::ConcatCols(a, b), rg))
    }

    /// Rows `idx` of `a`, in order. Unselected rows receive zero gradient.
    pub fn gather_rows(&mut self, a: Var, idx: Rc<Vec<usize>>) -> Result<Var, TensorError> {
        let va = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= va.rows()) {
            return Err(TensorError::IndexOutOfBounds {
                op: "gather_rows",
                index: bad,
                bound: va.rows(),
            });
        }
        let value = va.select_rows(&idx);
        let rg = self.rg(a);
        Ok(self.push(value, Op::GatherRows(a, idx), rg))
    }

    fn check_segments(&self, op: &'static str, a: Var, seg: &Segments) -> Result<(), TensorError> {
        let rows = self.value(a).rows();
        if rows != seg.len() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape(a),
                rhs: (seg.len(), 1),
            });
        }
        Ok(())
    }

    pub fn segment_sum(&mut self, a: Var, seg: &Rc<Segments>) -> Result<Var, TensorError> {
        self.check_segments("segment_sum", a, seg)?;
        let va = self.value(a);
        let mut value = Matrix::zeros(seg.n_segments(), va.cols());
        for (r, &s) in seg.ids().iter().enumerate() {
            for (d, x) in value.row_mut(s).iter_mut().zip(va.row(r)) {
                *d += x;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::SegmentSum(a, Rc::clone(seg)), rg))
    }

    pub fn segment_mean(&mut self, a: Var, seg: &Rc<Segments>) -> Result<Var, TensorError> {
        self.check_segments("segment_mean", a, seg)?;
        let counts = seg.check_nonempty()?;
        let va = self.value(a);
        let mut value = Matrix::zeros(seg.n_segments(), va.cols());
        for (r, &s) in seg.ids().iter().enumerate() {
            for (d, x) in value.row_mut(s).iter_mut().zip(va.row(r)) {
                *d += x;
            }
        }
        for (s, &c) in counts.iter().enumerate() {
            let inv = 1.0 / c as f64;
            value.row_mut(s).iter_mut().for_each(|x| *x *= inv);
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::SegmentMean(a, Rc::clone(seg), counts), rg))
    }

    /// Column-wise max per segment. The backward pass routes each column's
    /// gradient to the first row attaining the max.
    pub fn segment_max(&mut self, a: Var, seg: &Rc<Segments>) -> Result<Var, TensorError> {
        self.check_segments("segment_max", a, seg)?;
        seg.check_nonempty()?;
        let va = self.value(a);
        let cols = va.cols();
        let mut value = Matrix::filled(seg.n_segments(), cols, f64::NEG_INFINITY);
        let mut argmax = vec![usize::MAX; seg.n_segments() * cols];
        for (r, &s) in seg.ids().iter().enumerate() {
            let src = va.row(r);
            let dst = value.row_mut(s);
            for c in 0..cols {
                if argmax[s * cols + c] == usize::MAX || src[c] > dst[c] {
                    dst[c] = src[c];
                    argmax[s * cols + c] = r;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::SegmentMax(a, Rc::clone(seg), argmax), rg))
    }

    /// Sum of all entries, as a 1×1 value.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    /// Mean of all entries, as a 1×1 value.
    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let n = va.data().len().max(1) as f64;
        let value = Matrix::scalar(va.sum() / n);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    /// Mean softmax cross-entropy of `logits` (one row per sample) against
    /// class indices, via log-sum-exp.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        labels: Rc<Vec<usize>>,
    ) -> Result<Var, TensorError> {
        let v = self.value(logits);
        if v.rows() != labels.len() || v.rows() == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: v.shape(),
                rhs: (labels.len(), 1),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= v.cols()) {
            return Err(TensorError::IndexOutOfBounds {
                op: "cross_entropy",
                index: bad,
                bound: v.cols(),
            });
        }
        let mut probs = Matrix::zeros(v.rows(), v.cols());
        let mut total = 0.0;
        for r in 0..v.rows() {
            let row = v.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            total += lse - row[labels[r]];
            for (p, x) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (x - lse).exp();
            }
        }
        let value = Matrix::scalar(total / v.rows() as f64);
        let rg = self.rg(logits);
        Ok(self.push(value, Op::CrossEntropy(logits, labels, probs), rg))
    }

    /// `h · p / ‖p‖` for a column vector `p`.
    pub fn normalized_projection(&mut self, h: Var, p: Var) -> Result<Var, TensorError> {
        let (vh, vp) = (self.value(h), self.value(p));
        if vp.cols() != 1 || vp.rows() != vh.cols() {
            return Err(mismatch("normalized_projection", vh, vp));
        }
        let norm = vp.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let value = vh.matmul(vp).map(|x| x / norm);
        let rg = self.rg(h) || self.rg(p);
        Ok(self.push(value, Op::NormalizedProjection(h, p), rg))
    }

    /// Reverse-mode sweep from a 1×1 `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(TensorError::NotScalar { rows, cols });
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut acc = |v: Var, delta: Matrix| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.matmul_t(self.value(*b)));
                }
                if self.rg(*b) {
                    acc(*b, self.value(*a).t_matmul(g));
                }
            }
            Op::SpMM(a, x) => {
                if self.rg(*x) {
                    let delta = a
                        .transpose()
                        .matmul_dense(g)
                        .expect("spmm backward shapes");
                    acc(*x, delta);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                if self.rg(*row) {
                    let mut s = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, x) in s.row_mut(0).iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    acc(*row, s);
                }
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::MulCol(a, col) => {
                let (va, vc) = (self.value(*a), self.value(*col));
                if self.rg(*a) {
                    let mut d = g.clone();
                    for r in 0..d.rows() {
                        let s = vc.get(r, 0);
                        d.row_mut(r).iter_mut().for_each(|x| *x *= s);
                    }
                    acc(*a, d);
                }
                if self.rg(*col) {
                    let d: Vec<f64> = (0..g.rows())
                        .map(|r| g.row(r).iter().zip(va.row(r)).map(|(x, y)| x * y).sum())
                        .collect();
                    acc(*col, Matrix::column(&d));
                }
            }
            Op::ScalarMul(a, s) => acc(*a, g.map(|x| x * s)),
            Op::Relu(a) => acc(
                *a,
                g.zip_map(self.value(*a), |gx, x| if x > 0.0 { gx } else { 0.0 }),
            ),
            Op::Sigmoid(a) => acc(*a, g.zip_map(out, |gx, y| gx * y * (1.0 - y))),
            Op::Tanh(a) => acc(*a, g.zip_map(out, |gx, y| gx * (1.0 - y * y))),
            Op::Abs(a) => acc(*a, g.zip_map(self.value(*a), |gx, x| gx * x.signum())),
            Op::Log(a) => acc(*a, g.zip_map(self.value(*a), |gx, x| gx / x)),
            Op::Softplus(a) => acc(*a, g.zip_map(self.value(*a), |gx, x| gx * sigmoid(x))),
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let mut da = Matrix::zeros(g.rows(), ca);
                let mut db = Matrix::zeros(g.rows(), cb);
                for r in 0..g.rows() {
                    da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::GatherRows(a, idx) => {
                let (rows, cols) = self.shape(*a);
                let mut d = Matrix::zeros(rows, cols);
                for (k, &i) in idx.iter().enumerate() {
                    for (x, y) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *x += y;
                    }
                }
                acc(*a, d);
            }
            Op::SegmentSum(a, seg) => {
                let mut d = Matrix::zeros(seg.len(), g.cols());
                for (r, &s) in seg.ids().iter().enumerate() {
                    d.row_mut(r).copy_from_slice(g.row(s));
                }
                acc(*a, d);
            }
            Op::SegmentMean(a, seg, counts) => {
                let mut d = Matrix::zeros(seg.len(), g.cols());
                for (r, &s) in seg.ids().iter().enumerate() {
                    let inv = 1.0 / counts[s] as f64;
                    for (x, y) in d.row_mut(r).iter_mut().zip(g.row(s)) {
                        *x = y * inv;
                    }
                }
                acc(*a, d);
            }
            Op::SegmentMax(a, seg, argmax) => {
                let cols = g.cols();
                let mut d = Matrix::zeros(seg.len(), cols);
                for s in 0..seg.n_segments() {
                    for c in 0..cols {
                        let r = argmax[s * cols + c];
                        let v = d.get(r, c) + g.get(s, c);
                        d.set(r, c, v);
                    }
                }
                acc(*a, d);
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, Matrix::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(*a);
                let n = (r * c).max(1) as f64;
                acc(*a, Matrix::filled(r, c, g.item() / n));
            }
            Op::CrossEntropy(logits, labels, probs) => {
                let scale = g.item() / labels.len() as f64;
                let mut d = probs.clone();
                for (r, &l) in labels.iter().enumerate() {
                    let row = d.row_mut(r);
                    row[l] -= 1.0;
                    row.iter_mut().for_each(|x| *x *= scale);
                }
                acc(*logits, d);
            }
            Op::NormalizedProjection(h, p) => {
                let (vh, vp) = (self.value(*h), self.value(*p));
                let norm = vp.data().iter().map(|x| x * x).sum::<f64>().sqrt();
                if self.rg(*h) {
                    acc(*h, g.matmul_t(vp).map(|x| x / norm));
                }
                if self.rg(*p) {
                    // d/dp (h·p/‖p‖) = hᵀg/‖p‖ − p (gᵀ h p)/‖p‖³
                    let htg = vh.t_matmul(g);
                    let coupling: f64 = g
                        .data()
                        .iter()
                        .zip(out.data())
                        .map(|(gi, yi)| gi * yi)
                        .sum();
                    let d = htg.zip_map(vp, |a, pj| a / norm - pj * coupling / (norm * norm));
                    acc(*p, d);
                }
            }
        }
    }
}
