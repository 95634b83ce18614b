//! A small reverse-mode automatic differentiation tape over dense row-major matrices.
//!
//! Every operation appends a node holding its forward value; [`Tape::backward`] walks
//! the nodes in reverse and accumulates adjoints into every node that depends on a
//! parameter leaf.

use statrs::function::gamma::{digamma, ln_gamma};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Matrix::from_vec(1, 1, vec![v])
    }

    pub fn column(data: Vec<f64>) -> Self {
        Matrix::from_vec(data.len(), 1, data)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shapes");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    fn zip(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "elementwise shapes");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "accumulate shapes");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
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

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a (n x m) + row (1 x m)` broadcast over rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    /// `ln(max(x, floor))`; zero derivative below the floor.
    Ln(Var, f64),
    Abs(Var),
    Square(Var),
    LnGamma(Var),
    Sum(Var),
    Columns(Var, usize, usize),
    /// Matrix divided by a 1 x 1 node.
    DivScalar(Var, Var),
    /// Log-softmax over all entries.
    LogSoftmax(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Adjoint of `v`; zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
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

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar node");
        m.data[0]
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is tracked.
    pub fn parameter(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let n = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), n)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (am, rm) = (self.value(a), self.value(row));
        assert_eq!((1, am.cols), rm.shape(), "add_row shapes");
        let mut v = am.clone();
        for r in 0..v.rows {
            for (x, b) in v.data[r * v.cols..(r + 1) * v.cols].iter_mut().zip(&rm.data) {
                *x += b;
            }
        }
        let n = self.needs(a) || self.needs(row);
        self.push(v, Op::AddRow(a, row), n)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        let n = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), n)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        let n = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), n)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        let n = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), n)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| k * x);
        let n = self.needs(a);
        self.push(v, Op::Scale(a, k), n)
    }

    /// Adds a constant to every entry.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        let n = self.needs(a);
        self.push(v, Op::Offset(a), n)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let n = self.needs(a);
        self.push(v, Op::Tanh(a), n)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        let n = self.needs(a);
        self.push(v, Op::Sigmoid(a), n)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        let n = self.needs(a);
        self.push(v, Op::Softplus(a), n)
    }

    pub fn ln(&mut self, a: Var, floor: f64) -> Var {
        let v = self.value(a).map(|x| x.max(floor).ln());
        let n = self.needs(a);
        self.push(v, Op::Ln(a, floor), n)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        let n = self.needs(a);
        self.push(v, Op::Abs(a), n)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        let n = self.needs(a);
        self.push(v, Op::Square(a), n)
    }

    pub fn ln_gamma(&mut self, a: Var) -> Var {
        let v = self.value(a).map(ln_gamma);
        let n = self.needs(a);
        self.push(v, Op::LnGamma(a), n)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).data.iter().sum());
        let n = self.needs(a);
        self.push(v, Op::Sum(a), n)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let count = self.value(a).data.len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / count)
    }

    /// Columns `start..start + len`.
    pub fn columns(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        assert!(start + len <= m.cols, "column slice out of range");
        let mut data = Vec::with_capacity(m.rows * len);
        for r in 0..m.rows {
            data.extend_from_slice(&m.row(r)[start..start + len]);
        }
        let v = Matrix::from_vec(m.rows, len, data);
        let n = self.needs(a);
        self.push(v, Op::Columns(a, start, len), n)
    }

    pub fn column(&mut self, a: Var, j: usize) -> Var {
        self.columns(a, j, 1)
    }

    pub fn div_scalar(&mut self, a: Var, s: Var) -> Var {
        let d = self.scalar_value(s);
        let v = self.value(a).map(|x| x / d);
        let n = self.needs(a) || self.needs(s);
        self.push(v, Op::DivScalar(a, s), n)
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let max = m.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + m.data.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let v = m.map(|x| x - lse);
        let n = self.needs(a);
        self.push(v, Op::LogSoftmax(a), n)
    }

    /// Reverse sweep from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = Some(g);
                continue;
            }
            let send = |v: Var, d: Matrix, grads: &mut Vec<Option<Matrix>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&d),
                    slot => *slot = Some(d),
                }
            };
            let out = &node.value;
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.needs(a) {
                        send(a, g.matmul(&self.value(b).transpose()), &mut grads);
                    }
                    if self.needs(b) {
                        send(b, self.value(a).transpose().matmul(&g), &mut grads);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs(row) {
                        let mut d = Matrix::zeros(1, g.cols);
                        for r in 0..g.rows {
                            for (acc, x) in d.data.iter_mut().zip(g.row(r)) {
                                *acc += x;
                            }
                        }
                        send(row, d, &mut grads);
                    }
                    send(a, g.clone(), &mut grads);
                }
                Op::Add(a, b) => {
                    send(a, g.clone(), &mut grads);
                    send(b, g.clone(), &mut grads);
                }
                Op::Sub(a, b) => {
                    send(a, g.clone(), &mut grads);
                    send(b, g.map(|x| -x), &mut grads);
                }
                Op::Mul(a, b) => {
                    if self.needs(a) {
                        send(a, g.zip(self.value(b), |x, y| x * y), &mut grads);
                    }
                    if self.needs(b) {
                        send(b, g.zip(self.value(a), |x, y| x * y), &mut grads);
                    }
                }
                Op::Scale(a, k) => send(a, g.map(|x| k * x), &mut grads),
                Op::Offset(a) => send(a, g.clone(), &mut grads),
                Op::Tanh(a) => send(a, g.zip(out, |x, t| x * (1.0 - t * t)), &mut grads),
                Op::Sigmoid(a) => send(a, g.zip(out, |x, s| x * s * (1.0 - s)), &mut grads),
                Op::Softplus(a) => {
                    send(a, g.zip(self.value(a), |x, z| x * sigmoid(z)), &mut grads)
                }
                Op::Ln(a, floor) => send(
                    a,
                    g.zip(self.value(a), |x, z| if z > floor { x / z } else { 0.0 }),
                    &mut grads,
                ),
                Op::Abs(a) => send(
                    a,
                    g.zip(self.value(a), |x, z| if z > 0.0 { x } else if z < 0.0 { -x } else { 0.0 }),
                    &mut grads,
                ),
                Op::Square(a) => send(a, g.zip(self.value(a), |x, z| 2.0 * x * z), &mut grads),
                Op::LnGamma(a) => send(a, g.zip(self.value(a), |x, z| x * digamma(z)), &mut grads),
                Op::Sum(a) => {
                    let (r, c) = self.value(a).shape();
                    send(a, Matrix::from_vec(r, c, vec![g.data[0]; r * c]), &mut grads);
                }
                Op::Columns(a, start, len) => {
                    let (r, c) = self.value(a).shape();
                    let mut d = Matrix::zeros(r, c);
                    for i in 0..r {
                        d.data[i * c + start..i * c + start + len].copy_from_slice(g.row(i));
                    }
                    send(a, d, &mut grads);
                }
                Op::DivScalar(a, s) => {
                    let denom = self.scalar_value(s);
                    if self.needs(a) {
                        send(a, g.map(|x| x / denom), &mut grads);
                    }
                    if self.needs(s) {
                        let dot: f64 = g.data.iter().zip(&out.data).map(|(x, o)| x * o).sum();
                        send(s, Matrix::scalar(-dot / denom), &mut grads);
                    }
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = g.data.iter().sum();
                    send(a, g.zip(out, |x, lp| x - lp.exp() * total), &mut grads);
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads, shapes: self.nodes.iter().map(|n| n.value.shape()).collect() }
    }
}
