//! Tape-based reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Calling
//! [`Tape::backward`] on a scalar result walks the tape in reverse and returns
//! the gradient of that scalar with respect to every recorded node.
//!
//! Binary elementwise ops broadcast along any axis of extent one, so a `1×C`
//! bias row or an `N×1` column can be combined with an `N×C` operand.

use crate::tensor::Matrix;
use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    Square(usize),
    Clamp(usize, f64, f64),
    SumAll(usize),
    SumRows(usize),
    SumCols(usize),
    Transpose(usize),
    Reshape(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols(usize, usize),
    SliceRows(usize, usize),
    SelectRows(usize, Vec<usize>),
    Pick(usize, Vec<(usize, usize)>),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    RowNorm(usize),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value())
    }
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("cannot broadcast shapes {a:?} and {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

#[inline]
fn bget(m: &Matrix, i: usize, j: usize) -> f64 {
    let r = if m.rows() == 1 { 0 } else { i };
    let c = if m.cols() == 1 { 0 } else { j };
    m.get(r, c)
}

fn broadcast_zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let (r, c) = broadcast_shape(a.shape(), b.shape());
    Matrix::from_fn(r, c, |i, j| f(bget(a, i, j), bget(b, i, j)))
}

/// Sum `g` down to `shape` along broadcast axes.
fn reduce_to(g: Matrix, shape: (usize, usize)) -> Matrix {
    if g.shape() == shape {
        return g;
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let r = if shape.0 == 1 { 0 } else { i };
            let c = if shape.1 == 1 { 0 } else { j };
            let v = out.get(r, c) + g.get(i, j);
            out.set(r, c, v);
        }
    }
    out
}

fn accumulate(grads: &mut [Option<Matrix>], id: usize, g: Matrix) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A leaf node. Gradients are still reported for it, so inputs that need
    /// derivatives (parameters, finite-difference probes) are plain leaves too.
    pub fn leaf(&self, value: Matrix) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.leaf(Matrix::filled(1, 1, v))
    }

    fn unary(&self, a: usize, f: impl FnOnce(&Matrix) -> Matrix, op: Op) -> Var<'_> {
        let value = f(&self.nodes.borrow()[a].value);
        self.push(value, op)
    }

    fn binary(&self, a: usize, b: usize, f: impl FnOnce(&Matrix, &Matrix) -> Matrix, op: Op) -> Var<'_> {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a].value, &nodes[b].value)
        };
        self.push(value, op)
    }

    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat of nothing");
        let value = {
            let nodes = self.nodes.borrow();
            let refs: Vec<&Matrix> = parts.iter().map(|v| &nodes[v.id].value).collect();
            Matrix::concat_cols(&refs)
        };
        self.push(value, Op::ConcatCols(parts.iter().map(|v| v.id).collect()))
    }

    pub fn concat_rows<'t>(&'t self, parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty(), "concat of nothing");
        let value = {
            let nodes = self.nodes.borrow();
            let refs: Vec<&Matrix> = parts.iter().map(|v| &nodes[v.id].value).collect();
            Matrix::concat_rows(&refs)
        };
        self.push(value, Op::ConcatRows(parts.iter().map(|v| v.id).collect()))
    }

    /// Reverse pass from a `1×1` root.
    pub fn backward(&self, root: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        let root_shape = nodes[root.id].value.shape();
        assert_eq!(root_shape, (1, 1), "backward from non-scalar {root_shape:?}");
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[root.id] = Some(Matrix::filled(1, 1, 1.0));

        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let out = &nodes[id].value;
            let val = |k: usize| &nodes[k].value;
            match &nodes[id].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&val(*b).transpose());
                    let gb = val(*a).transpose().matmul(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, reduce_to(g.clone(), val(*a).shape()));
                    accumulate(&mut grads, *b, reduce_to(g.clone(), val(*b).shape()));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, reduce_to(g.clone(), val(*a).shape()));
                    accumulate(&mut grads, *b, reduce_to(g.scale(-1.0), val(*b).shape()));
                }
                Op::Mul(a, b) => {
                    let ga = broadcast_zip(&g, val(*b), |x, y| x * y);
                    let gb = broadcast_zip(&g, val(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, reduce_to(ga, val(*a).shape()));
                    accumulate(&mut grads, *b, reduce_to(gb, val(*b).shape()));
                }
                Op::Div(a, b) => {
                    let ga = broadcast_zip(&g, val(*b), |x, y| x / y);
                    // d(a/b)/db = -(a/b)/b = -out/b
                    let gout = g.zip_map(out, |x, o| -x * o);
                    let gb = broadcast_zip(&gout, val(*b), |x, y| x / y);
                    accumulate(&mut grads, *a, reduce_to(ga, val(*a).shape()));
                    accumulate(&mut grads, *b, reduce_to(gb, val(*b).shape()));
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g.clone()),
                Op::Tanh(a) => accumulate(&mut grads, *a, g.zip_map(out, |x, y| x * (1.0 - y * y))),
                Op::Sigmoid(a) => accumulate(&mut grads, *a, g.zip_map(out, |x, y| x * y * (1.0 - y))),
                Op::Relu(a) => accumulate(&mut grads, *a, g.zip_map(val(*a), |x, v| if v > 0.0 { x } else { 0.0 })),
                Op::LeakyRelu(a, slope) => accumulate(
                    &mut grads,
                    *a,
                    g.zip_map(val(*a), |x, v| if v > 0.0 { x } else { x * slope }),
                ),
                Op::Exp(a) => accumulate(&mut grads, *a, g.zip_map(out, |x, y| x * y)),
                Op::Ln(a) => accumulate(&mut grads, *a, g.zip_map(val(*a), |x, v| x / v)),
                Op::Sqrt(a) => accumulate(
                    &mut grads,
                    *a,
                    g.zip_map(out, |x, y| if y > 0.0 { x / (2.0 * y) } else { 0.0 }),
                ),
                Op::Square(a) => accumulate(&mut grads, *a, g.zip_map(val(*a), |x, v| 2.0 * x * v)),
                Op::Clamp(a, lo, hi) => accumulate(
                    &mut grads,
                    *a,
                    g.zip_map(val(*a), |x, v| if v > *lo && v < *hi { x } else { 0.0 }),
                ),
                Op::SumAll(a) => {
                    let (r, c) = val(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.item()));
                }
                Op::SumRows(a) => {
                    let (r, c) = val(*a).shape();
                    accumulate(&mut grads, *a, Matrix::from_fn(r, c, |i, _| g.get(i, 0)));
                }
                Op::SumCols(a) => {
                    let (r, c) = val(*a).shape();
                    accumulate(&mut grads, *a, Matrix::from_fn(r, c, |_, j| g.get(0, j)));
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Reshape(a) => {
                    let (r, c) = val(*a).shape();
                    accumulate(&mut grads, *a, g.clone().reshaped(r, c));
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = val(p).cols();
                        accumulate(&mut grads, p, g.slice_cols(off, w));
                        off += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (r, c) = val(p).shape();
                        let slice = Matrix::from_vec(r, c, g.data()[off * c..(off + r) * c].to_vec());
                        accumulate(&mut grads, p, slice);
                        off += r;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = val(*a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for i in 0..r {
                        ga.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = val(*a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for i in 0..g.rows() {
                        ga.row_mut(start + i).copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SelectRows(a, idx) => {
                    let (r, c) = val(*a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for (k, &src) in idx.iter().enumerate() {
                        for (d, &s) in ga.row_mut(src).iter_mut().zip(g.row(k)) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Pick(a, idx) => {
                    let (r, c) = val(*a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for (k, &(i, j)) in idx.iter().enumerate() {
                        let v = ga.get(i, j) + g.get(k, 0);
                        ga.set(i, j, v);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let mut ga = Matrix::zeros(out.rows(), out.cols());
                    for i in 0..out.rows() {
                        let dot: f64 = g.row(i).iter().zip(out.row(i)).map(|(x, y)| x * y).sum();
                        for j in 0..out.cols() {
                            ga.set(i, j, out.get(i, j) * (g.get(i, j) - dot));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut ga = Matrix::zeros(out.rows(), out.cols());
                    for i in 0..out.rows() {
                        let gsum: f64 = g.row(i).iter().sum();
                        for j in 0..out.cols() {
                            ga.set(i, j, g.get(i, j) - out.get(i, j).exp() * gsum);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowNorm(a) => {
                    let x = val(*a);
                    let ga = Matrix::from_fn(x.rows(), x.cols(), |i, j| {
                        let n = out.get(i, 0);
                        if n > 0.0 {
                            g.get(i, 0) * x.get(i, j) / n
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
            }
            grads[id] = Some(g);
        }
        Gradients { grads }
    }
}

/// Gradients of one scalar with respect to every node of a tape.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Matrix> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zeros when `v` does not influence the root.
    pub fn wrt(&self, v: Var<'_>) -> Matrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = v.shape();
                Matrix::zeros(r, c)
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Matrix {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&Matrix) -> R) -> R {
        f(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn item(&self) -> f64 {
        self.with_value(Matrix::item)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.with_value(Matrix::shape)
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    /// Same value as a fresh leaf, cutting the gradient path.
    pub fn detach(&self) -> Var<'t> {
        self.tape.leaf(self.value())
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self.id, other.id, |a, b| a.matmul(b), Op::MatMul(self.id, other.id))
    }

    pub fn t(self) -> Var<'t> {
        self.tape.unary(self.id, Matrix::transpose, Op::Transpose(self.id))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.tape.unary(self.id, |a| a.scale(s), Op::Scale(self.id, s))
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        self.tape.unary(self.id, |a| a.map(|x| x + s), Op::AddScalar(self.id))
    }

    pub fn tanh(self) -> Var<'t> {
        self.tape.unary(self.id, |a| a.map(f64::tanh), Op::Tanh(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.tape.unary(self.id, |a| a.map(sigmoid), Op::Sigmoid(self.id))
    }

    pub fn relu(self) -> Var<'t> {
        self.tape.unary(self.id, |a| a.map(|x| x.max(0.0)), Op::Relu(self.id))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        self.tape.unary(
            self.id,
            |a| a.map(|x| if x > 0.0 { x } else { slope * x }),
            Op::LeakyRelu(self.id, slope),
        )
    }

    pub fn exp(self) -> Var<'t> {
        self.tape.unary(self.id, |a| a.map(f64::exp), Op::Exp(self.id))
    }

    pub fn ln(self) -> Var<'t> {
        self.tape.unary(self.id, |a| a.map(f64::ln), Op::Ln(self.id))
    }

    pub fn sqrt(self) -> Var<'t> {
        self.tape.unary(self.id, |a| a.map(f64::sqrt), Op::Sqrt(self.id))
    }

    pub fn square(self) -> Var<'t> {
        self.tape.unary(self.id, |a| a.map(|x| x * x), Op::Square(self.id))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.tape
            .unary(self.id, |a| a.map(|x| x.clamp(lo, hi)), Op::Clamp(self.id, lo, hi))
    }

    /// Sum of every entry, `1×1`.
    pub fn sum(self) -> Var<'t> {
        self.tape
            .unary(self.id, |a| Matrix::filled(1, 1, a.sum()), Op::SumAll(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.with_value(Matrix::len) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Per-row sums, `R×1`.
    pub fn sum_rows(self) -> Var<'t> {
        self.tape.unary(
            self.id,
            |a| Matrix::from_fn(a.rows(), 1, |i, _| a.row(i).iter().sum()),
            Op::SumRows(self.id),
        )
    }

    /// Per-column sums, `1×C`.
    pub fn sum_cols(self) -> Var<'t> {
        self.tape.unary(
            self.id,
            |a| Matrix::from_fn(1, a.cols(), |_, j| (0..a.rows()).map(|i| a.get(i, j)).sum()),
            Op::SumCols(self.id),
        )
    }

    pub fn reshape(self, rows: usize, cols: usize) -> Var<'t> {
        self.tape
            .unary(self.id, |a| a.clone().reshaped(rows, cols), Op::Reshape(self.id))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Var<'t> {
        self.tape
            .unary(self.id, |a| a.slice_cols(start, len), Op::SliceCols(self.id, start))
    }

    pub fn slice_rows(self, start: usize, len: usize) -> Var<'t> {
        self.tape.unary(
            self.id,
            |a| {
                assert!(start + len <= a.rows(), "row slice out of range");
                let c = a.cols();
                Matrix::from_vec(len, c, a.data()[start * c..(start + len) * c].to_vec())
            },
            Op::SliceRows(self.id, start),
        )
    }

    pub fn select_rows(self, idx: &[usize]) -> Var<'t> {
        self.tape
            .unary(self.id, |a| a.select_rows(idx), Op::SelectRows(self.id, idx.to_vec()))
    }

    /// Gather individual entries into a `K×1` column.
    pub fn pick(self, idx: &[(usize, usize)]) -> Var<'t> {
        self.tape.unary(
            self.id,
            |a| Matrix::from_fn(idx.len(), 1, |k, _| a.get(idx[k].0, idx[k].1)),
            Op::Pick(self.id, idx.to_vec()),
        )
    }

    pub fn softmax_rows(self) -> Var<'t> {
        self.tape.unary(self.id, softmax_rows, Op::SoftmaxRows(self.id))
    }

    pub fn log_softmax_rows(self) -> Var<'t> {
        self.tape.unary(self.id, log_softmax_rows, Op::LogSoftmaxRows(self.id))
    }

    /// Euclidean norm of each row, `R×1`. The subgradient at zero is zero.
    pub fn row_norm(self) -> Var<'t> {
        self.tape.unary(
            self.id,
            |a| Matrix::from_fn(a.rows(), 1, |i, _| a.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()),
            Op::RowNorm(self.id),
        )
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

pub fn softmax_rows(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for i in 0..a.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            z += *x;
        }
        for x in row.iter_mut() {
            *x /= z;
        }
    }
    out
}

pub fn log_softmax_rows(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for i in 0..a.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        for x in row.iter_mut() {
            *x -= lse;
        }
    }
    out
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:ident, $f:expr) => {
        impl<'t> $trait for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                assert!(std::ptr::eq(self.tape, rhs.tape), "vars from different tapes");
                self.tape.binary(
                    self.id,
                    rhs.id,
                    |a, b| broadcast_zip(a, b, $f),
                    Op::$op(self.id, rhs.id),
                )
            }
        }
    };
}

binop!(Add, add, Add, |x, y| x + y);
binop!(Sub, sub, Sub, |x, y| x - y);
binop!(Mul, mul, Mul, |x, y| x * y);
binop!(Div, div, Div, |x, y| x / y);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}
