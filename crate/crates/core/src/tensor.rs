//! Dense rank-2 tensors and a reverse-mode differentiation tape.
//!
//! The tape is generic over the scalar type so the same forward code runs in
//! `f32` for training and in `f64` for finite-difference gradient checks.
//! Besides the usual dense operations it carries the sparse, edge-indexed
//! operations needed by message passing layers: fixed-coefficient
//! aggregation, per-edge attention scores, per-destination softmax and
//! attention-weighted aggregation.
//!
//! All kernels are single-threaded; results are bit-reproducible for a given
//! input.

use std::fmt::Debug;
use std::iter::Sum;
use std::sync::Arc;

use num_traits::Float;

pub trait Scalar: Float + Debug + Default + Sum + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match shape");
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · other`
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in o_row.iter_mut().zip(other.row(k)) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · other` without materialising the transpose.
    fn t_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b_row = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`
    fn matmul_t(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = a.iter().zip(other.row(j)).map(|(&x, &y)| x * y).sum();
            }
        }
        out
    }

    fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// Sparse edge list grouped by destination: for destination `v`, the edges
/// `offsets[v]..offsets[v + 1]` point at source rows `sources[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeIndex {
    pub offsets: Vec<usize>,
    pub sources: Vec<u32>,
}

impl EdgeIndex {
    pub fn n_dst(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.sources.len()
    }

    /// Destination of every edge, in edge order.
    pub fn destinations(&self) -> Vec<u32> {
        let mut d = Vec::with_capacity(self.n_edges());
        for v in 0..self.n_dst() {
            d.extend(std::iter::repeat(v as u32).take(self.offsets[v + 1] - self.offsets[v]));
        }
        d
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Per-row classification target of the cross-entropy loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub row: u32,
    pub class: u32,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    Elu(f64),
    LeakyRelu(f64),
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Activate(Var, Activation),
    /// `out[v] = Σ_k coef[k] · x[src_k]` over the edges of `v`.
    Aggregate {
        x: Var,
        edges: Arc<EdgeIndex>,
        coef: Arc<Vec<T>>,
    },
    /// `e_k = s[v_k, 0] + s[u_k, 1]`
    EdgeScores {
        s: Var,
        edges: Arc<EdgeIndex>,
    },
    EdgeSoftmax {
        e: Var,
        edges: Arc<EdgeIndex>,
    },
    /// `out[v] = Σ_k α_k · x[src_k]`
    AttendAggregate {
        alpha: Var,
        x: Var,
        edges: Arc<EdgeIndex>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Arc<Vec<Target>>,
        probs: Matrix<T>,
    },
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

/// Records operations and their results for one forward pass.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// Adds a `1 × cols` bias row to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Var {
        let (x, b) = (self.value(a), self.value(bias));
        assert_eq!(b.shape(), (1, x.cols()), "bias shape mismatch");
        let mut value = x.clone();
        for r in 0..value.rows() {
            for (o, &bb) in value.row_mut(r).iter_mut().zip(b.data()) {
                *o = *o + bb;
            }
        }
        self.push(value, Op::AddRowBias(a, bias))
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return a;
        }
        let value = self.value(a).map(|x| apply_activation(act, x));
        self.push(value, Op::Activate(a, act))
    }

    pub fn aggregate(&mut self, x: Var, edges: Arc<EdgeIndex>, coef: Arc<Vec<T>>) -> Var {
        assert_eq!(coef.len(), edges.n_edges(), "one coefficient per edge");
        let xv = self.value(x);
        let mut out = Matrix::zeros(edges.n_dst(), xv.cols());
        for v in 0..edges.n_dst() {
            let o = out.row_mut(v);
            for k in edges.offsets[v]..edges.offsets[v + 1] {
                let c = coef[k];
                for (oo, &xx) in o.iter_mut().zip(xv.row(edges.sources[k] as usize)) {
                    *oo = *oo + c * xx;
                }
            }
        }
        self.push(out, Op::Aggregate { x, edges, coef })
    }

    /// Per-edge score from an `n × 2` matrix: column 0 is read at the
    /// destination, column 1 at the source.
    pub fn edge_scores(&mut self, s: Var, edges: Arc<EdgeIndex>) -> Var {
        let sv = self.value(s);
        assert_eq!(sv.cols(), 2, "edge scores need a two-column input");
        let mut out = Matrix::zeros(edges.n_edges(), 1);
        for v in 0..edges.n_dst() {
            for k in edges.offsets[v]..edges.offsets[v + 1] {
                let u = edges.sources[k] as usize;
                out.data[k] = sv.get(v, 0) + sv.get(u, 1);
            }
        }
        self.push(out, Op::EdgeScores { s, edges })
    }

    /// Adds a constant per-edge offset (not differentiated).
    pub fn add_constant(&mut self, e: Var, offset: &Matrix<T>) -> Var {
        let leaf = self.leaf(offset.clone());
        self.add(e, leaf)
    }

    /// Element-wise sum of two equally shaped values.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shape mismatch");
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(value, Op::Add(a, b))
    }

    /// Softmax over the edges of each destination.
    pub fn edge_softmax(&mut self, e: Var, edges: Arc<EdgeIndex>) -> Var {
        let ev = self.value(e);
        let mut out = Matrix::zeros(edges.n_edges(), 1);
        for v in 0..edges.n_dst() {
            let r = edges.offsets[v]..edges.offsets[v + 1];
            if r.is_empty() {
                continue;
            }
            let max = r
                .clone()
                .map(|k| ev.data[k])
                .fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for k in r.clone() {
                let x = (ev.data[k] - max).exp();
                out.data[k] = x;
                total = total + x;
            }
            for k in r {
                out.data[k] = out.data[k] / total;
            }
        }
        self.push(out, Op::EdgeSoftmax { e, edges })
    }

    pub fn attend_aggregate(&mut self, alpha: Var, x: Var, edges: Arc<EdgeIndex>) -> Var {
        let (av, xv) = (self.value(alpha), self.value(x));
        assert_eq!(av.shape(), (edges.n_edges(), 1), "one attention weight per edge");
        let mut out = Matrix::zeros(edges.n_dst(), xv.cols());
        for v in 0..edges.n_dst() {
            let o = out.row_mut(v);
            for k in edges.offsets[v]..edges.offsets[v + 1] {
                let a = av.data[k];
                for (oo, &xx) in o.iter_mut().zip(xv.row(edges.sources[k] as usize)) {
                    *oo = *oo + a * xx;
                }
            }
        }
        self.push(out, Op::AttendAggregate { alpha, x, edges })
    }

    /// Weighted mean of `−log softmax(logits[row])[class]` over the targets.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Arc<Vec<Target>>) -> Var {
        let lv = self.value(logits);
        let probs = row_softmax(lv);
        let total_w: f64 = targets.iter().map(|t| t.weight).sum();
        let mut loss = 0.0f64;
        for t in targets.iter() {
            let p = probs.get(t.row as usize, t.class as usize).to_f64();
            loss -= t.weight * p.max(f64::MIN_POSITIVE).ln();
        }
        let loss = if total_w > 0.0 { loss / total_w } else { 0.0 };
        let value = Matrix::from_vec(1, 1, vec![T::from_f64(loss)]);
        self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            },
        )
    }

    /// Back-propagates from the scalar `output` and returns the gradient of
    /// every recorded value (`None` for values that do not reach `output`).
    pub fn backward(&self, output: Var) -> Gradients<T> {
        assert_eq!(self.value(output).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::from_vec(1, 1, vec![T::one()]));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn backprop_node(&self, i: usize, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.matmul_t(bv));
                accumulate(grads, *b, av.t_matmul(g));
            }
            Op::AddRowBias(a, bias) => {
                accumulate(grads, *a, g.clone());
                let mut gb = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &x) in gb.data.iter_mut().zip(g.row(r)) {
                        *o = *o + x;
                    }
                }
                accumulate(grads, *bias, gb);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Activate(a, act) => {
                let x = self.value(*a);
                let mut ga = g.clone();
                for (o, (&xx, &yy)) in ga.data.iter_mut().zip(x.data.iter().zip(&node.value.data)) {
                    *o = *o * activation_slope(*act, xx, yy);
                }
                accumulate(grads, *a, ga);
            }
            Op::Aggregate { x, edges, coef } => {
                let xv = self.value(*x);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for v in 0..edges.n_dst() {
                    let gv = g.row(v);
                    for k in edges.offsets[v]..edges.offsets[v + 1] {
                        let c = coef[k];
                        for (o, &gg) in gx.row_mut(edges.sources[k] as usize).iter_mut().zip(gv) {
                            *o = *o + c * gg;
                        }
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::EdgeScores { s, edges } => {
                let sv = self.value(*s);
                let mut gs = Matrix::zeros(sv.rows(), 2);
                for v in 0..edges.n_dst() {
                    for k in edges.offsets[v]..edges.offsets[v + 1] {
                        let u = edges.sources[k] as usize;
                        let ge = g.data[k];
                        gs.data[v * 2] = gs.data[v * 2] + ge;
                        gs.data[u * 2 + 1] = gs.data[u * 2 + 1] + ge;
                    }
                }
                accumulate(grads, *s, gs);
            }
            Op::EdgeSoftmax { e, edges } => {
                let alpha = &node.value;
                let mut ge = Matrix::zeros(alpha.rows(), 1);
                for v in 0..edges.n_dst() {
                    let r = edges.offsets[v]..edges.offsets[v + 1];
                    let dot: T = r.clone().map(|k| alpha.data[k] * g.data[k]).sum();
                    for k in r {
                        ge.data[k] = alpha.data[k] * (g.data[k] - dot);
                    }
                }
                accumulate(grads, *e, ge);
            }
            Op::AttendAggregate { alpha, x, edges } => {
                let (av, xv) = (self.value(*alpha), self.value(*x));
                let mut ga = Matrix::zeros(av.rows(), 1);
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for v in 0..edges.n_dst() {
                    let gv = g.row(v);
                    for k in edges.offsets[v]..edges.offsets[v + 1] {
                        let u = edges.sources[k] as usize;
                        ga.data[k] = gv.iter().zip(xv.row(u)).map(|(&a, &b)| a * b).sum();
                        let a = av.data[k];
                        for (o, &gg) in gx.row_mut(u).iter_mut().zip(gv) {
                            *o = *o + a * gg;
                        }
                    }
                }
                accumulate(grads, *alpha, ga);
                accumulate(grads, *x, gx);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let total_w: f64 = targets.iter().map(|t| t.weight).sum();
                let mut gl = Matrix::zeros(probs.rows(), probs.cols());
                if total_w > 0.0 {
                    let upstream = g.data[0];
                    for t in targets.iter() {
                        let w = T::from_f64(t.weight / total_w) * upstream;
                        let r = t.row as usize;
                        for c in 0..probs.cols() {
                            let onehot = if c == t.class as usize { T::one() } else { T::zero() };
                            let cur = gl.get(r, c);
                            gl.set(r, c, cur + w * (probs.get(r, c) - onehot));
                        }
                    }
                }
                accumulate(grads, *logits, gl);
            }
        }
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of the given shape when `v` does not
    /// influence the output.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Matrix<T> {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(rows, cols))
    }
}

pub fn apply_activation<T: Scalar>(act: Activation, x: T) -> T {
    match act {
        Activation::Identity => x,
        Activation::Relu => x.max(T::zero()),
        Activation::Elu(alpha) => {
            if x > T::zero() {
                x
            } else {
                T::from_f64(alpha) * (x.exp() - T::one())
            }
        }
        Activation::LeakyRelu(slope) => {
            if x > T::zero() {
                x
            } else {
                T::from_f64(slope) * x
            }
        }
    }
}

/// Derivative of the activation given its input `x` and output `y`.
fn activation_slope<T: Scalar>(act: Activation, x: T, y: T) -> T {
    match act {
        Activation::Identity => T::one(),
        Activation::Relu => {
            if x > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        Activation::Elu(alpha) => {
            if x > T::zero() {
                T::one()
            } else {
                y + T::from_f64(alpha)
            }
        }
        Activation::LeakyRelu(slope) => {
            if x > T::zero() {
                T::one()
            } else {
                T::from_f64(slope)
            }
        }
    }
}

/// Numerically stable softmax of every row.
pub fn row_softmax<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total = total + *x;
        }
        for x in row.iter_mut() {
            *x = *x / total;
        }
    }
    out
}
