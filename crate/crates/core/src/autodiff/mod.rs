//! Dense reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation in creation order; [`Var`] is a cheap
//! copyable handle into it. [`Tape::backward`] walks the tape once in reverse
//! and returns a [`Gradients`] table. A tape is meant to live for exactly one
//! optimisation step and then be dropped.
//!
//! Binary elementwise operations broadcast an operand whose row count or
//! column count is 1 (including 1x1 scalars).

mod adam;
pub mod gradcheck;
mod params;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use params::{Bound, ParamId, ParamStore};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cell::{Ref, RefCell};
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Floor applied before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Affine(usize, f64),
    Powf(usize, f64),
    Exp(usize),
    Log(usize),
    Sigmoid(usize),
    Relu(usize),
    SoftmaxRows(usize),
    Sum(usize),
    Mean(usize),
    RowSums(usize),
    ConcatCols(usize, usize),
    Dropout(usize, Rc<Matrix>),
    RbfGram(usize, f64),
    CenterGram(usize),
    Trace(usize),
    GatherRows(usize, Rc<Vec<usize>>),
    ScatterAddRows(usize, Rc<Vec<usize>>),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// What [`Var::detach`] does with the values it cuts off.
#[derive(Default)]
enum Detached {
    #[default]
    Pass,
    /// Keep a copy of each, in order.
    Record(Vec<Matrix>),
    /// Substitute the recorded values, in order.
    Replay(Vec<Matrix>, usize),
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    detached: RefCell<Detached>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
    rows: usize,
    cols: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({}x{})", self.id, self.rows, self.cols)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that keeps every detached value; see [`Tape::detached_values`].
    pub fn recording_detached() -> Self {
        Tape {
            detached: RefCell::new(Detached::Record(Vec::new())),
            ..Self::default()
        }
    }

    /// A tape on which the `k`-th detach yields `values[k]` instead of the
    /// current value, so a computation can be re-run with its stop-gradient
    /// inputs held fixed.
    pub fn replaying_detached(values: Vec<Matrix>) -> Self {
        Tape {
            detached: RefCell::new(Detached::Replay(values, 0)),
            ..Self::default()
        }
    }

    /// Values recorded by a [`Tape::recording_detached`] tape.
    pub fn detached_values(&self) -> Vec<Matrix> {
        match &*self.detached.borrow() {
            Detached::Record(v) => v.clone(),
            _ => Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Matrix, op: Op, requires_grad: bool) -> Var<'_> {
        let (rows, cols) = value.shape();
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
            rows,
            cols,
        }
    }

    fn value(&self, id: usize) -> Ref<'_, Matrix> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if (loss.rows, loss.cols) != (1, 1) {
            return Err(Error::ShapeMismatch {
                op: "backward (loss must be scalar)",
                lhs: (loss.rows, loss.cols),
                rhs: (1, 1),
            });
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        let mut shapes: Vec<(usize, usize)> = nodes.iter().map(|n| n.value.shape()).collect();
        shapes.truncate(nodes.len());
        grads[loss.id] = Some(Matrix::scalar(1.0));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            let mut acc = |target: usize, contrib: Matrix| {
                if !nodes[target].requires_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(existing) => existing.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            };
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    if nodes[*a].requires_grad {
                        acc(*a, g.matmul_t(val(*b))?);
                    }
                    if nodes[*b].requires_grad {
                        acc(*b, val(*a).t_matmul(&g)?);
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, reduce_to(&g, val(*a).shape()));
                    acc(*b, reduce_to(&g, val(*b).shape()));
                }
                Op::Sub(a, b) => {
                    acc(*a, reduce_to(&g, val(*a).shape()));
                    acc(*b, reduce_to(&g.scale(-1.0), val(*b).shape()));
                }
                Op::Mul(a, b) => {
                    if nodes[*a].requires_grad {
                        let full = broadcast_zip(&g, val(*b), |x, y| x * y);
                        acc(*a, reduce_to(&full, val(*a).shape()));
                    }
                    if nodes[*b].requires_grad {
                        let full = broadcast_zip(&g, val(*a), |x, y| x * y);
                        acc(*b, reduce_to(&full, val(*b).shape()));
                    }
                }
                Op::Affine(a, scale) => acc(*a, g.scale(*scale)),
                Op::Powf(a, p) => {
                    let d = val(*a).map(|x| p * x.powf(p - 1.0));
                    acc(*a, g.zip_map(&d, |x, y| x * y));
                }
                Op::Exp(a) => acc(*a, g.zip_map(&node.value, |x, y| x * y)),
                Op::Log(a) => acc(
                    *a,
                    g.zip_map(val(*a), |x, v| if v > LOG_FLOOR { x / v } else { 0.0 }),
                ),
                Op::Sigmoid(a) => acc(*a, g.zip_map(&node.value, |x, y| x * y * (1.0 - y))),
                Op::Relu(a) => acc(*a, g.zip_map(val(*a), |x, v| if v > 0.0 { x } else { 0.0 })),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let gy: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                        for c in 0..y.cols() {
                            d[(r, c)] = y[(r, c)] * (g[(r, c)] - gy);
                        }
                    }
                    acc(*a, d);
                }
                Op::Sum(a) => {
                    let (r, c) = val(*a).shape();
                    acc(*a, Matrix::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = val(*a).shape();
                    acc(*a, Matrix::filled(r, c, g.item() / (r * c) as f64));
                }
                Op::RowSums(a) => {
                    let (r, c) = val(*a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..r {
                        d.row_mut(i).iter_mut().for_each(|x| *x = g[(i, 0)]);
                    }
                    acc(*a, d);
                }
                Op::ConcatCols(a, b) => {
                    let ca = val(*a).cols();
                    let cb = val(*b).cols();
                    let mut ga = Matrix::zeros(g.rows(), ca);
                    let mut gb = Matrix::zeros(g.rows(), cb);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Dropout(a, mask) => acc(*a, g.zip_map(mask, |x, m| x * m)),
                Op::RbfGram(a, bandwidth) => {
                    let x = val(*a);
                    let k = &node.value;
                    let n = x.rows();
                    let inv = 1.0 / (bandwidth * bandwidth);
                    let mut d = Matrix::zeros(n, x.cols());
                    for i in 0..n {
                        for j in 0..n {
                            if i == j {
                                continue;
                            }
                            let w = (g[(i, j)] + g[(j, i)]) * k[(i, j)] * inv;
                            if w == 0.0 {
                                continue;
                            }
                            let (xi, xj) = (x.row(i), x.row(j));
                            let diff: Vec<f64> = xj.iter().zip(xi).map(|(b, a)| b - a).collect();
                            for (o, dv) in d.row_mut(i).iter_mut().zip(&diff) {
                                *o += w * dv;
                            }
                        }
                    }
                    acc(*a, d);
                }
                Op::CenterGram(a) => acc(*a, center(&g)),
                Op::Trace(a) => {
                    let n = val(*a).rows();
                    acc(*a, Matrix::identity(n).scale(g.item()));
                }
                Op::GatherRows(a, idx) => {
                    let src = val(*a);
                    let mut d = Matrix::zeros(src.rows(), src.cols());
                    for (k, &i) in idx.iter().enumerate() {
                        for (o, &x) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    acc(*a, d);
                }
                Op::ScatterAddRows(a, idx) => acc(*a, g.select_rows(idx)),
            }
        }
        Ok(Gradients { grads, shapes })
    }
}

/// Output of [`Tape::backward`], keyed by the [`Var`] handles of the tape.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of a leaf; all zeros when the loss does not depend on it.
    pub fn get(&self, v: Var<'_>) -> Matrix {
        self.grads
            .get(v.id)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| {
                let (r, c) = self.shapes[v.id];
                Matrix::zeros(r, c)
            })
    }
}

fn broadcast_shape(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::ShapeMismatch { op, lhs: a, rhs: b }),
    }
}

/// Elementwise `f(a, b)` where `b` broadcasts against `a` (or vice versa).
fn broadcast_zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let rows = a.rows().max(b.rows());
    let cols = a.cols().max(b.cols());
    let at = |m: &Matrix, r: usize, c: usize| {
        m[(if m.rows() == 1 { 0 } else { r }, if m.cols() == 1 { 0 } else { c })]
    };
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            out[(r, c)] = f(at(a, r, c), at(b, r, c));
        }
    }
    out
}

/// Sums `g` down to `shape` along broadcast dimensions.
fn reduce_to(g: &Matrix, shape: (usize, usize)) -> Matrix {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for r in 0..g.rows() {
        for c in 0..g.cols() {
            let rr = if shape.0 == 1 { 0 } else { r };
            let cc = if shape.1 == 1 { 0 } else { c };
            out[(rr, cc)] += g[(r, c)];
        }
    }
    out
}

/// `H K H` with `H = I - 11^T / n`.
fn center(k: &Matrix) -> Matrix {
    let n = k.rows();
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).iter().sum::<f64>() / nf).collect();
    let mut col_means = vec![0.0; n];
    for i in 0..n {
        for (c, &x) in col_means.iter_mut().zip(k.row(i)) {
            *c += x / nf;
        }
    }
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = k[(i, j)] - row_means[i] - col_means[j] + grand;
        }
    }
    out
}

/// Gram matrix `exp(-|x_i - x_j|^2 / (2 bandwidth^2))` of the rows of `x`.
pub fn rbf_gram_matrix(x: &Matrix, bandwidth: f64) -> Matrix {
    let n = x.rows();
    let denom = 2.0 * bandwidth * bandwidth;
    let mut k = Matrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = (-d2 / denom).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Centering transform `H K H`.
pub fn center_gram_matrix(k: &Matrix) -> Matrix {
    center(k)
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Copy of the forward value.
    pub fn value(&self) -> Matrix {
        self.tape.value(self.id).clone()
    }

    /// Forward value of a 1x1 variable.
    pub fn item(&self) -> f64 {
        self.tape.value(self.id).item()
    }

    /// Same value, cut off from the gradient flow.
    ///
    /// # Panics
    /// On a replaying tape, when the detach sequence no longer matches the
    /// recorded one.
    pub fn detach(&self) -> Var<'t> {
        let value = match &mut *self.tape.detached.borrow_mut() {
            Detached::Pass => self.value(),
            Detached::Record(v) => {
                v.push(self.value());
                self.value()
            }
            Detached::Replay(v, k) => {
                let value = v.get(*k).cloned().expect("more detaches than recorded");
                assert_eq!(value.shape(), self.shape(), "replayed detach {k} changed shape");
                *k += 1;
                value
            }
        };
        self.tape.constant(value)
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
    }

    fn unary(&self, op: Op, f: impl Fn(&Matrix) -> Matrix) -> Var<'t> {
        let value = f(&self.tape.value(self.id));
        let rg = self.tape.requires(self.id);
        self.tape.push(value, op, rg)
    }

    fn binary(
        &self,
        other: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        self.same_tape(&other);
        broadcast_shape(name, self.shape(), other.shape())?;
        let value = {
            let a = self.tape.value(self.id);
            let b = self.tape.value(other.id);
            broadcast_zip(&a, &b, f)
        };
        let rg = self.tape.requires(self.id) || self.tape.requires(other.id);
        Ok(self.tape.push(value, op, rg))
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let value = {
            let a = self.tape.value(self.id);
            let b = self.tape.value(other.id);
            a.matmul(&b)?
        };
        let rg = self.tape.requires(self.id) || self.tape.requires(other.id);
        Ok(self.tape.push(value, Op::MatMul(self.id, other.id), rg))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    /// `scale * x + offset`.
    pub fn affine(&self, scale: f64, offset: f64) -> Var<'t> {
        self.unary(Op::Affine(self.id, scale), |m| m.map(|x| scale * x + offset))
    }

    pub fn scale(&self, s: f64) -> Var<'t> {
        self.affine(s, 0.0)
    }

    /// `1 - x`.
    pub fn complement(&self) -> Var<'t> {
        self.affine(-1.0, 1.0)
    }

    /// Elementwise `x^p`. Rejects negative bases for non-integer `p` and
    /// zero bases for negative `p`.
    pub fn powf(&self, p: f64) -> Result<Var<'t>> {
        {
            let v = self.tape.value(self.id);
            let bad = v.as_slice().iter().any(|&x| {
                (x < 0.0 && p.fract() != 0.0) || (x == 0.0 && p < 0.0)
            });
            if bad {
                return Err(Error::domain(format!("power {p} of a value outside its domain")));
            }
        }
        Ok(self.unary(Op::Powf(self.id, p), |m| m.map(|x| x.powf(p))))
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(Op::Exp(self.id), |m| m.map(f64::exp))
    }

    /// Natural log with the argument clamped at [`LOG_FLOOR`].
    pub fn ln(&self) -> Var<'t> {
        self.unary(Op::Log(self.id), |m| m.map(|x| x.max(LOG_FLOOR).ln()))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), |m| m.map(sigmoid))
    }

    pub fn relu(&self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |m| m.map(|x| x.max(0.0)))
    }

    pub fn softmax_rows(&self) -> Var<'t> {
        self.unary(Op::SoftmaxRows(self.id), softmax_rows)
    }

    pub fn sum(&self) -> Var<'t> {
        self.unary(Op::Sum(self.id), |m| Matrix::scalar(m.sum()))
    }

    pub fn mean(&self) -> Var<'t> {
        self.unary(Op::Mean(self.id), |m| Matrix::scalar(m.sum() / m.len() as f64))
    }

    /// Row-wise sums as an `n x 1` column.
    pub fn row_sums(&self) -> Var<'t> {
        self.unary(Op::RowSums(self.id), |m| {
            let sums: Vec<f64> = (0..m.rows()).map(|r| m.row(r).iter().sum()).collect();
            Matrix::column(&sums)
        })
    }

    pub fn concat_cols(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let value = {
            let a = self.tape.value(self.id);
            let b = self.tape.value(other.id);
            let mut out = Matrix::zeros(a.rows(), a.cols() + b.cols());
            for r in 0..a.rows() {
                out.row_mut(r)[..a.cols()].copy_from_slice(a.row(r));
                out.row_mut(r)[a.cols()..].copy_from_slice(b.row(r));
            }
            out
        };
        let rg = self.tape.requires(self.id) || self.tape.requires(other.id);
        Ok(self.tape.push(value, Op::ConcatCols(self.id, other.id), rg))
    }

    /// Inverted dropout: zeroes each entry with probability `rate` and
    /// rescales survivors by `1 / (1 - rate)`. The mask is a pure function
    /// of `seed`.
    pub fn dropout(&self, rate: f64, seed: u64) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::domain(format!("dropout rate {rate} not in [0, 1)")));
        }
        if rate == 0.0 {
            return Ok(*self);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.rows * self.cols)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mask = Rc::new(Matrix::from_vec(self.rows, self.cols, mask)?);
        let m = Rc::clone(&mask);
        Ok(self.unary(Op::Dropout(self.id, mask), move |v| v.zip_map(&m, |x, k| x * k)))
    }

    /// Radial-kernel Gram matrix of the rows.
    pub fn rbf_gram(&self, bandwidth: f64) -> Result<Var<'t>> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::domain(format!("rbf bandwidth {bandwidth} must be positive")));
        }
        Ok(self.unary(Op::RbfGram(self.id, bandwidth), |m| rbf_gram_matrix(m, bandwidth)))
    }

    /// `H K H` for a square `K`.
    pub fn center_gram(&self) -> Result<Var<'t>> {
        if self.rows != self.cols {
            return Err(Error::ShapeMismatch {
                op: "center_gram",
                lhs: self.shape(),
                rhs: (self.rows, self.rows),
            });
        }
        Ok(self.unary(Op::CenterGram(self.id), center))
    }

    pub fn trace(&self) -> Result<Var<'t>> {
        if self.rows != self.cols {
            return Err(Error::ShapeMismatch {
                op: "trace",
                lhs: self.shape(),
                rhs: (self.rows, self.rows),
            });
        }
        Ok(self.unary(Op::Trace(self.id), |m| {
            Matrix::scalar((0..m.rows()).map(|i| m[(i, i)]).sum())
        }))
    }

    /// `out[k] = self[idx[k]]`.
    pub fn gather_rows(&self, idx: Rc<Vec<usize>>) -> Result<Var<'t>> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.rows) {
            return Err(Error::ShapeMismatch {
                op: "gather_rows",
                lhs: self.shape(),
                rhs: (bad, 0),
            });
        }
        let i2 = Rc::clone(&idx);
        Ok(self.unary(Op::GatherRows(self.id, idx), move |m| m.select_rows(&i2)))
    }

    /// `out[idx[k]] += self[k]` into an `n x cols` result.
    pub fn scatter_add_rows(&self, idx: Rc<Vec<usize>>, n: usize) -> Result<Var<'t>> {
        if idx.len() != self.rows || idx.iter().any(|&i| i >= n) {
            return Err(Error::ShapeMismatch {
                op: "scatter_add_rows",
                lhs: self.shape(),
                rhs: (idx.len(), n),
            });
        }
        let i2 = Rc::clone(&idx);
        Ok(self.unary(Op::ScatterAddRows(self.id, idx), move |m| {
            let mut out = Matrix::zeros(n, m.cols());
            for (k, &i) in i2.iter().enumerate() {
                for (o, &x) in out.row_mut(i).iter_mut().zip(m.row(k)) {
                    *o += x;
                }
            }
            out
        }))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted row softmax.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            z += *x;
        }
        row.iter_mut().for_each(|x| *x /= z);
    }
    out
}
