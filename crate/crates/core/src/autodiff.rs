//! Define-by-run reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Tape`] owns every [`Value`] created during one forward pass. Operations
//! are methods on the tape that take [`VarId`] handles and return a new handle,
//! so the tape is in topological order by construction. [`Tape::backward`]
//! walks it in reverse and accumulates `∂root/∂v` into every value that
//! requires a gradient.
//!
//! [`Tape::stop_grad`] copies a value's data into a fresh node that records no
//! dependence on its input. Anything computed from it is a constant as far as
//! the backward pass is concerned.
//!
//! ```
//! use aace::autodiff::{Array, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Array::scalar(3.0));
//! let frozen = tape.stop_grad(x);
//! let y = tape.mul(x, frozen).unwrap();
//! tape.backward(y).unwrap();
//! // d/dx [x · stop_grad(x)] = stop_grad(x) = 3, not 2x = 6
//! assert_eq!(tape.grad(x).unwrap().data(), &[3.0]);
//! ```

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![x],
        }
    }

    /// One-dimensional array.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Two-dimensional array from equal-length rows.
    ///
    /// Panics if the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(row.as_ref());
        }
        Self {
            shape: vec![rows.len(), cols],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows and row width when viewed as a matrix over the last axis.
    /// A 1-D array is a single row.
    pub fn as_matrix(&self) -> (usize, usize) {
        let cols = self.shape.last().copied().unwrap_or(1);
        match self.data.len().checked_div(cols) {
            Some(rows) => (rows, cols),
            None => (0, 0),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let (_, cols) = self.as_matrix();
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn add_assign(&mut self, other: &[f64]) {
        for (a, b) in self.data.iter_mut().zip(other) {
            *a += b;
        }
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VarId(usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The primitive that produced a value.
#[derive(Clone, Debug)]
pub enum Op {
    Leaf,
    /// Copy of another value with the backward edge cut.
    StopGrad,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    Scale(VarId, f64),
    MatMul(VarId, VarId),
    Relu(VarId),
    LogSoftmax(VarId),
    /// Row-wise contraction `out[r] = Σ_k w[r,k] · x[r,k]` against constant weights.
    GatherClass(VarId, Array),
    Mean(VarId),
    Sum(VarId),
}

impl Op {
    fn inputs(&self) -> Vec<VarId> {
        match self {
            Op::Leaf | Op::StopGrad => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::LogSoftmax(a)
            | Op::GatherClass(a, _)
            | Op::Mean(a)
            | Op::Sum(a) => vec![*a],
        }
    }
}

/// A node on the tape: data, lazily allocated gradient, and how it was made.
#[derive(Clone, Debug)]
pub struct Value {
    data: Array,
    grad: Option<Array>,
    requires_grad: bool,
    op: Op,
}

impl Value {
    pub fn data(&self) -> &Array {
        &self.data
    }

    pub fn grad(&self) -> Option<&Array> {
        self.grad.as_ref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn op(&self) -> &Op {
        &self.op
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Value>,
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

    pub fn value(&self, id: VarId) -> &Value {
        &self.nodes[id.0]
    }

    pub fn data(&self, id: VarId) -> &Array {
        &self.nodes[id.0].data
    }

    pub fn grad(&self, id: VarId) -> Option<&Array> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Operation inputs of `id`, in order. Empty for leaves and stop-grad nodes.
    pub fn inputs(&self, id: VarId) -> Vec<VarId> {
        self.nodes[id.0].op.inputs()
    }

    /// Drops every accumulated gradient.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub fn leaf(&mut self, data: Array, requires_grad: bool) -> VarId {
        self.push(data, requires_grad, Op::Leaf)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, data: Array) -> VarId {
        self.leaf(data, true)
    }

    pub fn constant(&mut self, data: Array) -> VarId {
        self.leaf(data, false)
    }

    fn push(&mut self, data: Array, requires_grad: bool, op: Op) -> VarId {
        self.nodes.push(Value {
            data,
            grad: None,
            requires_grad,
            op,
        });
        VarId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[VarId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn mismatch(&self, op: &'static str, a: VarId, b: VarId) -> Error {
        Error::ShapeMismatch {
            op,
            left: self.data(a).shape.clone(),
            right: self.data(b).shape.clone(),
        }
    }

    pub fn stop_grad(&mut self, x: VarId) -> VarId {
        let data = self.data(x).clone();
        self.push(data, false, Op::StopGrad)
    }

    /// Elementwise sum. `b` may also be a 1-D row broadcast over every row of a 2-D `a`.
    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (da, db) = (self.data(a), self.data(b));
        let out = if da.shape == db.shape {
            da.data.iter().zip(&db.data).map(|(x, y)| x + y).collect()
        } else if da.shape.len() == 2 && db.shape.len() == 1 && da.shape[1] == db.shape[0] {
            let cols = db.shape[0];
            da.data
                .iter()
                .enumerate()
                .map(|(i, x)| x + db.data[i % cols])
                .collect()
        } else {
            return Err(self.mismatch("add", a, b));
        };
        let shape = da.shape.clone();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Array { shape, data: out }, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (da, db) = (self.data(a), self.data(b));
        if da.shape != db.shape {
            return Err(self.mismatch("sub", a, b));
        }
        let out = da.data.iter().zip(&db.data).map(|(x, y)| x - y).collect();
        let shape = da.shape.clone();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Array { shape, data: out }, rg, Op::Sub(a, b)))
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (da, db) = (self.data(a), self.data(b));
        if da.shape != db.shape {
            return Err(self.mismatch("mul", a, b));
        }
        let out = da.data.iter().zip(&db.data).map(|(x, y)| x * y).collect();
        let shape = da.shape.clone();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Array { shape, data: out }, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: VarId, c: f64) -> VarId {
        let da = self.data(a);
        let out = da.data.iter().map(|x| c * x).collect();
        let shape = da.shape.clone();
        let rg = self.needs(&[a]);
        self.push(Array { shape, data: out }, rg, Op::Scale(a, c))
    }

    /// `[m, k] × [k, n] → [m, n]`.
    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (da, db) = (self.data(a), self.data(b));
        if da.shape.len() != 2 || db.shape.len() != 2 || da.shape[1] != db.shape[0] {
            return Err(self.mismatch("matmul", a, b));
        }
        let (m, k, n) = (da.shape[0], da.shape[1], db.shape[1]);
        let out = matmul_raw(&da.data, &db.data, m, k, n);
        let rg = self.needs(&[a, b]);
        Ok(self.push(
            Array {
                shape: vec![m, n],
                data: out,
            },
            rg,
            Op::MatMul(a, b),
        ))
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let da = self.data(a);
        let out = da
            .data
            .iter()
            .map(|&x| if x > 0.0 { x } else { 0.0 })
            .collect();
        let shape = da.shape.clone();
        let rg = self.needs(&[a]);
        self.push(Array { shape, data: out }, rg, Op::Relu(a))
    }

    /// Log-softmax over the last (class) axis, via max subtraction.
    pub fn log_softmax(&mut self, a: VarId) -> Result<VarId> {
        let da = self.data(a);
        if da.shape.is_empty() || da.shape.len() > 2 || da.shape[da.shape.len() - 1] == 0 {
            return Err(Error::ShapeMismatch {
                op: "log_softmax",
                left: da.shape.clone(),
                right: vec![],
            });
        }
        let (rows, cols) = da.as_matrix();
        let mut out = Vec::with_capacity(da.len());
        for r in 0..rows {
            out.extend(log_softmax_row(&da.data[r * cols..(r + 1) * cols]));
        }
        let shape = da.shape.clone();
        let rg = self.needs(&[a]);
        Ok(self.push(Array { shape, data: out }, rg, Op::LogSoftmax(a)))
    }

    /// Contracts each row of `x` against the matching row of the constant
    /// `weights`. One-hot weight rows select a class; probability rows give
    /// the expected value under that distribution.
    pub fn gather_class(&mut self, x: VarId, weights: Array) -> Result<VarId> {
        let dx = self.data(x);
        if dx.shape != weights.shape || dx.shape.len() > 2 || dx.shape.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "gather_class",
                left: dx.shape.clone(),
                right: weights.shape.clone(),
            });
        }
        let (rows, cols) = dx.as_matrix();
        let out: Vec<f64> = (0..rows)
            .map(|r| {
                let span = r * cols..(r + 1) * cols;
                dx.data[span.clone()]
                    .iter()
                    .zip(&weights.data[span])
                    .map(|(v, w)| v * w)
                    .sum()
            })
            .collect();
        let rg = self.needs(&[x]);
        Ok(self.push(
            Array {
                shape: vec![rows],
                data: out,
            },
            rg,
            Op::GatherClass(x, weights),
        ))
    }

    /// Selects `x[r, classes[r]]` for every row.
    pub fn gather_index(&mut self, x: VarId, classes: &[usize]) -> Result<VarId> {
        let (rows, cols) = self.data(x).as_matrix();
        if rows != classes.len() {
            return Err(Error::ShapeMismatch {
                op: "gather_class",
                left: self.data(x).shape.clone(),
                right: vec![classes.len()],
            });
        }
        let mut weights = Array::zeros(self.data(x).shape());
        for (r, &c) in classes.iter().enumerate() {
            if c >= cols {
                return Err(Error::ClassOutOfRange {
                    index: c,
                    classes: cols,
                });
            }
            weights.data[r * cols + c] = 1.0;
        }
        self.gather_class(x, weights)
    }

    pub fn mean(&mut self, a: VarId) -> VarId {
        let da = self.data(a);
        let m = da.data.iter().sum::<f64>() / da.len() as f64;
        let rg = self.needs(&[a]);
        self.push(Array::scalar(m), rg, Op::Mean(a))
    }

    pub fn sum(&mut self, a: VarId) -> VarId {
        let s = self.data(a).data.iter().sum();
        let rg = self.needs(&[a]);
        self.push(Array::scalar(s), rg, Op::Sum(a))
    }

    /// Accumulates `∂root/∂v` into the gradient of every value on the tape
    /// that requires one. Calling it twice without [`Tape::zero_grads`] adds
    /// the gradients twice.
    pub fn backward(&mut self, root: VarId) -> Result<()> {
        let root_shape = &self.data(root).shape;
        if self.data(root).len() != 1 || root_shape.len() > 1 {
            return Err(Error::NonScalarRoot(root_shape.clone()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(existing) => existing.add_assign(&g),
                None => {
                    node.grad = Some(Array {
                        shape: node.data.shape.clone(),
                        data: g,
                    })
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let mut send = |id: VarId, f: &dyn Fn(&mut [f64])| {
            if !self.nodes[id.0].requires_grad {
                return;
            }
            let slot = adj[id.0].get_or_insert_with(|| vec![0.0; self.nodes[id.0].data.len()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf | Op::StopGrad => {}
            Op::Add(a, b) => {
                send(*a, &|s| axpy(s, 1.0, g));
                let broadcast = self.data(*b).shape != node.data.shape;
                send(*b, &|s| {
                    if broadcast {
                        let cols = s.len();
                        for (k, v) in g.iter().enumerate() {
                            s[k % cols] += v;
                        }
                    } else {
                        axpy(s, 1.0, g)
                    }
                });
            }
            Op::Sub(a, b) => {
                send(*a, &|s| axpy(s, 1.0, g));
                send(*b, &|s| axpy(s, -1.0, g));
            }
            Op::Mul(a, b) => {
                let (da, db) = (&self.data(*a).data, &self.data(*b).data);
                send(*a, &|s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * db[k];
                    }
                });
                send(*b, &|s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * da[k];
                    }
                });
            }
            Op::Scale(a, c) => send(*a, &|s| axpy(s, *c, g)),
            Op::MatMul(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                let (m, k, n) = (da.shape[0], da.shape[1], db.shape[1]);
                // dA = G · Bᵀ
                send(*a, &|s| {
                    for r in 0..m {
                        for c in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[r * n + j] * db.data[c * n + j];
                            }
                            s[r * k + c] += acc;
                        }
                    }
                });
                // dB = Aᵀ · G
                send(*b, &|s| {
                    for r in 0..m {
                        for c in 0..k {
                            let av = da.data[r * k + c];
                            if av == 0.0 {
                                continue;
                            }
                            let out = &mut s[c * n..(c + 1) * n];
                            for (o, gv) in out.iter_mut().zip(&g[r * n..(r + 1) * n]) {
                                *o += av * gv;
                            }
                        }
                    }
                });
            }
            Op::Relu(a) => {
                let y = &node.data.data;
                send(*a, &|s| {
                    for k in 0..s.len() {
                        if y[k] > 0.0 {
                            s[k] += g[k];
                        }
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let (rows, cols) = node.data.as_matrix();
                let y = &node.data.data;
                send(*a, &|s| {
                    for r in 0..rows {
                        let span = r * cols..(r + 1) * cols;
                        let gsum: f64 = g[span.clone()].iter().sum();
                        for k in span {
                            s[k] += g[k] - y[k].exp() * gsum;
                        }
                    }
                });
            }
            Op::GatherClass(x, w) => {
                let (rows, cols) = w.as_matrix();
                send(*x, &|s| {
                    for r in 0..rows {
                        for c in 0..cols {
                            s[r * cols + c] += g[r] * w.data[r * cols + c];
                        }
                    }
                });
            }
            Op::Mean(a) => {
                let n = self.data(*a).len() as f64;
                send(*a, &|s| s.iter_mut().for_each(|v| *v += g[0] / n));
            }
            Op::Sum(a) => send(*a, &|s| s.iter_mut().for_each(|v| *v += g[0])),
        }
    }
}

fn axpy(out: &mut [f64], alpha: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let row = &mut out[r * n..(r + 1) * n];
        for c in 0..k {
            let av = a[r * k + c];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in row.iter_mut().zip(&b[c * n..(c + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `z_i − m − ln Σ_j exp(z_j − m)` with `m = max z`.
pub fn log_softmax_row(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - m - lse).collect()
}

/// Central-difference gradient estimate `(f(x + h·e_i) − f(x − h·e_i)) / 2h`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFiniteProbe { coordinate: i, h });
        }
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}
