//! Tape-based reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation as a node; [`Tape::backward`] runs one
//! reverse sweep that visits each node exactly once in reverse insertion
//! order, accumulating gradients additively into every node that requires
//! them.  Tapes are cheap and meant to be rebuilt for every forward pass;
//! long-lived parameters live outside the tape as plain [`Tensor`]s and are
//! re-inserted as leaves each pass.

pub mod adam;

use thiserror::Error;

/// Errors produced while building or differentiating a graph.
#[derive(Debug, Error)]
pub enum GradError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: String,
        right: String,
    },
    #[error("invalid operand for {op}: {detail}")]
    InvalidOperand { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got {numel} elements")]
    NonScalarLoss { numel: usize },
    #[error("tensor data length {len} does not match shape {shape}")]
    DataLength { len: usize, shape: String },
    #[error("non-finite value encountered in {what}")]
    NonFinite { what: String },
    #[error("optimizer state holds {state} parameter slots, step got {given}")]
    ParamCount { state: usize, given: usize },
    #[error("step size {0} is not positive and finite")]
    BadStepSize(f64),
}

fn shape_str(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("[{}]", dims.join(","))
}

/// Dense row-major tensor.  Gradient storage is populated by
/// [`Tape::backward`] and always matches the data length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, GradError> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(GradError::DataLength {
                len: data.len(),
                shape: shape_str(&shape),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(GradError::NonFinite {
                what: format!("tensor literal of shape {}", shape_str(&shape)),
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![1], vec![v]).expect("scalar is always well formed")
    }

    pub fn vector(data: Vec<f64>) -> Result<Self, GradError> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, GradError> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Marks the tensor as a trainable leaf when inserted into a tape.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Tanh { x: Var },
    Relu { x: Var },
    LogSoftmax { x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Minimum { a: Var, b: Var },
    MulScalar { x: Var, c: f64 },
    AddScalar { x: Var },
    Sum { x: Var },
    Mean { x: Var },
    Square { x: Var },
    Exp { x: Var },
    Log { x: Var },
    Concat { parts: Vec<Var> },
    Gather { x: Var, indices: Vec<usize> },
    Clamp { x: Var, lo: f64, hi: f64 },
}

struct Node {
    tensor: Tensor,
    op: Op,
}

/// Records a computation graph for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Inserts a tensor as a leaf node, keeping its `requires_grad` flag.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.push(tensor, Op::Leaf)
    }

    /// Inserts a tensor as a non-differentiable constant leaf.
    pub fn constant(&mut self, mut tensor: Tensor) -> Var {
        tensor.requires_grad = false;
        self.push(tensor, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].tensor
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].tensor.data()
    }

    /// Gradient of the last `backward` call with respect to `v`, if any was
    /// accumulated.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].tensor.grad()
    }

    fn push(&mut self, tensor: Tensor, op: Op) -> Var {
        self.nodes.push(Node { tensor, op });
        Var(self.nodes.len() - 1)
    }

    fn shape_of(&self, v: Var) -> &[usize] {
        self.nodes[v.0].tensor.shape()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].tensor.requires_grad
    }

    fn result(&self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Tensor {
        Tensor {
            shape,
            data,
            requires_grad,
            grad: None,
        }
    }

    /// Interprets a shape as `(rows, cols)`, treating a 1-D tensor as one row.
    fn rows_cols(shape: &[usize]) -> Option<(usize, usize)> {
        match shape.len() {
            1 => Some((1, shape[0])),
            2 => Some((shape[0], shape[1])),
            _ => None,
        }
    }

    /// `x · w + b` with `x` of shape `[n]` or `[rows, n]`, `w` of shape
    /// `[n, m]`, `b` of shape `[m]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, GradError> {
        let (rows, n) = Self::rows_cols(self.shape_of(x)).ok_or(GradError::InvalidOperand {
            op: "affine",
            detail: format!("input must be 1-D or 2-D, got {}", shape_str(self.shape_of(x))),
        })?;
        let ws = self.shape_of(w).to_vec();
        if ws.len() != 2 || ws[0] != n {
            return Err(GradError::ShapeMismatch {
                op: "affine",
                left: shape_str(self.shape_of(x)),
                right: shape_str(&ws),
            });
        }
        let m = ws[1];
        if self.shape_of(b) != [m] {
            return Err(GradError::ShapeMismatch {
                op: "affine",
                left: shape_str(&ws),
                right: shape_str(self.shape_of(b)),
            });
        }
        let xd = self.data(x);
        let wd = self.data(w);
        let bd = self.data(b);
        let mut out = vec![0.0; rows * m];
        for i in 0..rows {
            let row = &mut out[i * m..(i + 1) * m];
            row.copy_from_slice(bd);
            for k in 0..n {
                let a = xd[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let wrow = &wd[k * m..(k + 1) * m];
                for (o, wv) in row.iter_mut().zip(wrow) {
                    *o += a * wv;
                }
            }
        }
        let out_shape = if self.shape_of(x).len() == 1 {
            vec![m]
        } else {
            vec![rows, m]
        };
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        let t = self.result(out_shape, out, rg);
        Ok(self.push(t, Op::Affine { x, w, b }))
    }

    fn unary<F: Fn(f64) -> f64>(&mut self, x: Var, f: F, op: Op) -> Var {
        let data = self.data(x).iter().map(|&v| f(v)).collect();
        let t = self.result(self.shape_of(x).to_vec(), data, self.rg(x));
        self.push(t, op)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh { x })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu { x })
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square { x })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp { x })
    }

    /// Natural log; the caller guarantees positive inputs.
    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log { x })
    }

    pub fn mul_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::MulScalar { x, c })
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar { x })
    }

    /// Clamps every element to `[lo, hi]`; gradients pass through unchanged
    /// strictly inside the bounds and are zero outside.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, |v| v.clamp(lo, hi), Op::Clamp { x, lo, hi })
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, GradError> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(GradError::ShapeMismatch {
                op: name,
                left: shape_str(self.shape_of(a)),
                right: shape_str(self.shape_of(b)),
            });
        }
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = self.result(self.shape_of(a).to_vec(), data, self.rg(a) || self.rg(b));
        Ok(self.push(t, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// Elementwise minimum; the gradient follows the smaller operand and
    /// goes to the first operand on ties.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary(
            "minimum",
            a,
            b,
            |x, y| if x <= y { x } else { y },
            Op::Minimum { a, b },
        )
    }

    /// Log-softmax along the last axis of a 1-D or 2-D tensor.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var, GradError> {
        let (rows, cols) = Self::rows_cols(self.shape_of(x)).ok_or(GradError::InvalidOperand {
            op: "log_softmax",
            detail: format!("input must be 1-D or 2-D, got {}", shape_str(self.shape_of(x))),
        })?;
        if cols == 0 {
            return Err(GradError::InvalidOperand {
                op: "log_softmax",
                detail: "empty rows".to_string(),
            });
        }
        let xd = self.data(x);
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            let row = &xd[i * cols..(i + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            for (o, v) in out[i * cols..(i + 1) * cols].iter_mut().zip(row) {
                *o = v - lse;
            }
        }
        let t = self.result(self.shape_of(x).to_vec(), out, self.rg(x));
        Ok(self.push(t, Op::LogSoftmax { x }))
    }

    /// Sum of all elements, producing a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.data(x).iter().sum();
        let t = self.result(vec![1], vec![s], self.rg(x));
        self.push(t, Op::Sum { x })
    }

    /// Mean of all elements, producing a `[1]` tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.data(x).len().max(1);
        let s: f64 = self.data(x).iter().sum();
        let t = self.result(vec![1], vec![s / n as f64], self.rg(x));
        self.push(t, Op::Mean { x })
    }

    /// Concatenates along the last axis.  All parts must share the other
    /// dimensions (1-D tensors concatenate end to end).
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, GradError> {
        if parts.is_empty() {
            return Err(GradError::InvalidOperand {
                op: "concat",
                detail: "no parts".to_string(),
            });
        }
        let ndim = self.shape_of(parts[0]).len();
        let (rows, _) =
            Self::rows_cols(self.shape_of(parts[0])).ok_or(GradError::InvalidOperand {
                op: "concat",
                detail: format!(
                    "parts must be 1-D or 2-D, got {}",
                    shape_str(self.shape_of(parts[0]))
                ),
            })?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = Self::rows_cols(self.shape_of(p)).ok_or(GradError::InvalidOperand {
                op: "concat",
                detail: format!("parts must be 1-D or 2-D, got {}", shape_str(self.shape_of(p))),
            })?;
            if self.shape_of(p).len() != ndim || r != rows {
                return Err(GradError::ShapeMismatch {
                    op: "concat",
                    left: shape_str(self.shape_of(parts[0])),
                    right: shape_str(self.shape_of(p)),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        for i in 0..rows {
            let mut offset = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                let src = &self.data(p)[i * w..(i + 1) * w];
                out[i * total + offset..i * total + offset + w].copy_from_slice(src);
                offset += w;
            }
        }
        let shape = if ndim == 1 { vec![total] } else { vec![rows, total] };
        let rg = parts.iter().any(|&p| self.rg(p));
        let t = self.result(shape, out, rg);
        Ok(self.push(
            t,
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Picks one element per row: `out[i] = x[i, indices[i]]`.  A 1-D input
    /// is treated as a single row.
    pub fn gather(&mut self, x: Var, indices: &[usize]) -> Result<Var, GradError> {
        let (rows, cols) = Self::rows_cols(self.shape_of(x)).ok_or(GradError::InvalidOperand {
            op: "gather",
            detail: format!("input must be 1-D or 2-D, got {}", shape_str(self.shape_of(x))),
        })?;
        if indices.len() != rows {
            return Err(GradError::InvalidOperand {
                op: "gather",
                detail: format!("{} indices for {} rows", indices.len(), rows),
            });
        }
        let mut out = vec![0.0; rows];
        for (i, &ix) in indices.iter().enumerate() {
            if ix >= cols {
                return Err(GradError::InvalidOperand {
                    op: "gather",
                    detail: format!("index {ix} out of range for {cols} columns"),
                });
            }
            out[i] = self.data(x)[i * cols + ix];
        }
        let t = self.result(vec![rows], out, self.rg(x));
        Ok(self.push(
            t,
            Op::Gather {
                x,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a scalar loss.  Visits each node exactly once in
    /// reverse insertion order and accumulates gradients additively into
    /// every node with `requires_grad`; nodes that do not require gradients
    /// are skipped.
    pub fn backward(&mut self, loss: Var) -> Result<(), GradError> {
        let numel = self.nodes[loss.0].tensor.numel();
        if numel != 1 {
            return Err(GradError::NonScalarLoss { numel });
        }
        for node in &mut self.nodes {
            node.tensor.grad = None;
        }
        if !self.nodes[loss.0].tensor.requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].tensor.grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if self.nodes[i].tensor.grad.is_none() || !self.nodes[i].tensor.requires_grad {
                continue;
            }
            // Take the node's gradient out so operand gradients can be
            // accumulated without aliasing the node itself.
            let g = self.nodes[i].tensor.grad.take().expect("checked above");
            self.propagate(i, &g);
            self.nodes[i].tensor.grad = Some(g);
        }
        Ok(())
    }

    fn add_grad(&mut self, v: Var, delta: &[f64]) {
        let t = &mut self.nodes[v.0].tensor;
        if !t.requires_grad {
            return;
        }
        let g = t.grad.get_or_insert_with(|| vec![0.0; t.data.len()]);
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    /// Adds into one operand's gradient via a closure that writes a freshly
    /// zeroed delta buffer of the operand's size.
    fn add_grad_with<F: FnOnce(&Tape, &mut [f64])>(&mut self, v: Var, fill: F) {
        if !self.nodes[v.0].tensor.requires_grad {
            return;
        }
        let mut delta = vec![0.0; self.nodes[v.0].tensor.numel()];
        fill(self, &mut delta);
        self.add_grad(v, &delta);
    }

    fn propagate(&mut self, node: usize, g: &[f64]) {
        // The op is cloned out of reach of the borrow checker where needed;
        // every arm only reads stored values and writes operand gradients.
        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (x, w, b) = (*x, *w, *b);
                let (rows, n) = Self::rows_cols(self.shape_of(x)).expect("validated at build");
                let m = self.shape_of(w)[1];
                self.add_grad_with(b, |tape, db| {
                    for i in 0..rows {
                        for j in 0..m {
                            db[j] += g[i * m + j];
                        }
                    }
                    let _ = tape;
                });
                self.add_grad_with(w, |tape, dw| {
                    let xd = tape.data(x);
                    for i in 0..rows {
                        let grow = &g[i * m..(i + 1) * m];
                        for k in 0..n {
                            let a = xd[i * n + k];
                            if a == 0.0 {
                                continue;
                            }
                            let drow = &mut dw[k * m..(k + 1) * m];
                            for (d, gv) in drow.iter_mut().zip(grow) {
                                *d += a * gv;
                            }
                        }
                    }
                });
                self.add_grad_with(x, |tape, dx| {
                    let wd = tape.data(w);
                    // Transposed copy keeps the inner loop contiguous.
                    let mut wt = vec![0.0; n * m];
                    for k in 0..n {
                        for j in 0..m {
                            wt[j * n + k] = wd[k * m + j];
                        }
                    }
                    for i in 0..rows {
                        let drow = &mut dx[i * n..(i + 1) * n];
                        for j in 0..m {
                            let gv = g[i * m + j];
                            if gv == 0.0 {
                                continue;
                            }
                            let wrow = &wt[j * n..(j + 1) * n];
                            for (d, wv) in drow.iter_mut().zip(wrow) {
                                *d += gv * wv;
                            }
                        }
                    }
                });
            }
            Op::Tanh { x } => {
                let x = *x;
                let y = node;
                self.add_grad_with(x, |tape, dx| {
                    let yd = &tape.nodes[y].tensor.data;
                    for ((d, gv), yv) in dx.iter_mut().zip(g).zip(yd) {
                        *d += gv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Relu { x } => {
                let x = *x;
                self.add_grad_with(x, |tape, dx| {
                    let xd = tape.data(x);
                    for ((d, gv), xv) in dx.iter_mut().zip(g).zip(xd) {
                        if *xv > 0.0 {
                            *d += gv;
                        }
                    }
                });
            }
            Op::LogSoftmax { x } => {
                let x = *x;
                let y = node;
                let (rows, cols) = Self::rows_cols(self.shape_of(x)).expect("validated at build");
                self.add_grad_with(x, |tape, dx| {
                    let yd = &tape.nodes[y].tensor.data;
                    for i in 0..rows {
                        let gs: f64 = g[i * cols..(i + 1) * cols].iter().sum();
                        for j in 0..cols {
                            let ix = i * cols + j;
                            dx[ix] += g[ix] - yd[ix].exp() * gs;
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                self.add_grad(a, g);
                self.add_grad(b, g);
            }
            Op::Sub { a, b } => {
                let (a, b) = (*a, *b);
                self.add_grad(a, g);
                self.add_grad_with(b, |_, db| {
                    for (d, gv) in db.iter_mut().zip(g) {
                        *d -= gv;
                    }
                });
            }
            Op::Mul { a, b } => {
                let (a, b) = (*a, *b);
                self.add_grad_with(a, |tape, da| {
                    let bd = tape.data(b);
                    for ((d, gv), bv) in da.iter_mut().zip(g).zip(bd) {
                        *d += gv * bv;
                    }
                });
                self.add_grad_with(b, |tape, db| {
                    let ad = tape.data(a);
                    for ((d, gv), av) in db.iter_mut().zip(g).zip(ad) {
                        *d += gv * av;
                    }
                });
            }
            Op::Minimum { a, b } => {
                let (a, b) = (*a, *b);
                self.add_grad_with(a, |tape, da| {
                    let (ad, bd) = (tape.data(a), tape.data(b));
                    for i in 0..da.len() {
                        if ad[i] <= bd[i] {
                            da[i] += g[i];
                        }
                    }
                });
                self.add_grad_with(b, |tape, db| {
                    let (ad, bd) = (tape.data(a), tape.data(b));
                    for i in 0..db.len() {
                        if ad[i] > bd[i] {
                            db[i] += g[i];
                        }
                    }
                });
            }
            Op::MulScalar { x, c } => {
                let (x, c) = (*x, *c);
                self.add_grad_with(x, |_, dx| {
                    for (d, gv) in dx.iter_mut().zip(g) {
                        *d += gv * c;
                    }
                });
            }
            Op::AddScalar { x } => {
                let x = *x;
                self.add_grad(x, g);
            }
            Op::Sum { x } => {
                let x = *x;
                self.add_grad_with(x, |_, dx| {
                    for d in dx.iter_mut() {
                        *d += g[0];
                    }
                });
            }
            Op::Mean { x } => {
                let x = *x;
                self.add_grad_with(x, |tape, dx| {
                    let n = tape.nodes[x.0].tensor.numel().max(1) as f64;
                    for d in dx.iter_mut() {
                        *d += g[0] / n;
                    }
                });
            }
            Op::Square { x } => {
                let x = *x;
                self.add_grad_with(x, |tape, dx| {
                    let xd = tape.data(x);
                    for ((d, gv), xv) in dx.iter_mut().zip(g).zip(xd) {
                        *d += gv * 2.0 * xv;
                    }
                });
            }
            Op::Exp { x } => {
                let x = *x;
                let y = node;
                self.add_grad_with(x, |tape, dx| {
                    let yd = &tape.nodes[y].tensor.data;
                    for ((d, gv), yv) in dx.iter_mut().zip(g).zip(yd) {
                        *d += gv * yv;
                    }
                });
            }
            Op::Log { x } => {
                let x = *x;
                self.add_grad_with(x, |tape, dx| {
                    let xd = tape.data(x);
                    for ((d, gv), xv) in dx.iter_mut().zip(g).zip(xd) {
                        *d += gv / xv;
                    }
                });
            }
            Op::Concat { parts } => {
                let parts = parts.clone();
                let (rows, _) = Self::rows_cols(self.shape_of(parts[0])).expect("validated");
                let total: usize = parts
                    .iter()
                    .map(|&p| Self::rows_cols(self.shape_of(p)).expect("validated").1)
                    .sum();
                let mut offset = 0;
                for &p in &parts {
                    let w = Self::rows_cols(self.shape_of(p)).expect("validated").1;
                    self.add_grad_with(p, |_, dp| {
                        for i in 0..rows {
                            let src = &g[i * total + offset..i * total + offset + w];
                            for (d, gv) in dp[i * w..(i + 1) * w].iter_mut().zip(src) {
                                *d += gv;
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::Gather { x, indices } => {
                let x = *x;
                let indices = indices.clone();
                let (_, cols) = Self::rows_cols(self.shape_of(x)).expect("validated");
                self.add_grad_with(x, |_, dx| {
                    for (i, &ix) in indices.iter().enumerate() {
                        dx[i * cols + ix] += g[i];
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let (x, lo, hi) = (*x, *lo, *hi);
                self.add_grad_with(x, |tape, dx| {
                    let xd = tape.data(x);
                    for ((d, gv), xv) in dx.iter_mut().zip(g).zip(xd) {
                        if *xv >= lo && *xv <= hi {
                            *d += gv;
                        }
                    }
                });
            }
        }
    }
}

/// Compares the analytic gradient of `f` at `x` against central differences.
///
/// Returns the maximum over components of
/// `|analytic - numeric| / max(1, |analytic|)`.  `f` must build a scalar
/// loss from the given leaf on the given tape.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64, GradError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, GradError>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(GradError::BadStepSize(h));
    }
    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone().with_grad());
    let loss = f(&mut tape, leaf)?;
    if tape.value(loss).numel() != 1 {
        return Err(GradError::NonScalarLoss {
            numel: tape.value(loss).numel(),
        });
    }
    tape.backward(loss)?;
    let analytic: Vec<f64> = match tape.grad(leaf) {
        Some(g) => g.to_vec(),
        None => vec![0.0; x.numel()],
    };

    let eval = |point: &Tensor| -> Result<f64, GradError> {
        let mut t = Tape::new();
        let v = t.leaf(point.clone());
        let l = f(&mut t, v)?;
        Ok(t.data(l)[0])
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, data: Vec<f64>) -> Var {
        tape.leaf(Tensor::vector(data).unwrap().with_grad())
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![0.0]);
        let y = tape.tanh(x);
        assert_eq!(tape.data(y), &[0.0]);
    }

    #[test]
    fn affine_identity_passes_input_through() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![3.0, -4.0]).unwrap());
        let w = tape.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = tape.constant(Tensor::vector(vec![0.0, 0.0]).unwrap());
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.data(y), &[3.0, -4.0]);
    }

    #[test]
    fn log_softmax_of_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, 0.0]).unwrap());
        let y = tape.log_softmax(x).unwrap();
        let expected = -(2.0f64).ln();
        for v in tape.data(y) {
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn sum_of_squares_gradient_is_two_x() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![3.0]);
        let sq = tape.square(x);
        let loss = tape.sum(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn mean_gradient_splits_evenly() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1.0, 2.0, 3.0, 4.0]);
        let loss = tape.mean(x);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.25, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn two_consumers_accumulate_gradients() {
        // loss = sum(x) + mean(x) over two elements: d/dx = 1 + 0.5.
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1.0, 2.0]);
        let s = tape.sum(x);
        let m = tape.mean(x);
        let loss = tape.add(s, m).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.5, 1.5]);
    }

    #[test]
    fn clamp_passes_gradient_inside_bounds_only() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![-3.0, 0.5, 3.0]);
        let c = tape.clamp(x, -1.0, 1.0);
        let loss = tape.sum(c);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn minimum_routes_gradient_to_smaller_operand() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, vec![1.0, 5.0, 2.0]);
        let b = leaf(&mut tape, vec![2.0, 3.0, 2.0]);
        let m = tape.minimum(a, b).unwrap();
        assert_eq!(tape.data(m), &[1.0, 3.0, 2.0]);
        let loss = tape.sum(m);
        tape.backward(loss).unwrap();
        // Tie at index 2 goes to the first operand.
        assert_eq!(tape.grad(a).unwrap(), &[1.0, 0.0, 1.0]);
        assert_eq!(tape.grad(b).unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn gather_backward_scatters_into_picked_columns() {
        let mut tape = Tape::new();
        let x = tape.leaf(
            Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
                .unwrap()
                .with_grad(),
        );
        let picked = tape.gather(x, &[2, 0]).unwrap();
        assert_eq!(tape.data(picked), &[3.0, 4.0]);
        let loss = tape.sum(picked);
        tape.backward(loss).unwrap();
        assert_eq!(
            tape.grad(x).unwrap(),
            &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn concat_splits_gradient_back_to_parts() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap().with_grad());
        let b = tape.leaf(Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap().with_grad());
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(c).shape(), &[2, 3]);
        assert_eq!(tape.data(c), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let s = tape.sum(c);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[1.0, 1.0]);
        assert_eq!(tape.grad(b).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn shape_mismatch_reports_op_and_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let b = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap());
        let err = tape.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("add"), "{msg}");
        assert!(msg.contains("[2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1.0, 2.0]);
        let y = tape.tanh(x);
        assert!(matches!(
            tape.backward(y),
            Err(GradError::NonScalarLoss { numel: 2 })
        ));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![2.0]);
        let c = tape.constant(Tensor::vector(vec![3.0]).unwrap());
        let y = tape.mul(x, c).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[3.0]);
        assert!(tape.grad(c).is_none());
    }

    #[test]
    fn grad_check_agrees_on_composite_graph() {
        let x = Tensor::vector(vec![0.3, -0.7, 1.2]).unwrap();
        let err = grad_check(
            |tape, v| {
                let t = tape.tanh(v);
                let s = tape.square(t);
                Ok(tape.mean(s))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn tensor_rejects_wrong_data_length() {
        assert!(Tensor::new(vec![2, 2], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn tensor_rejects_non_finite_values() {
        assert!(Tensor::vector(vec![f64::NAN]).is_err());
    }
}
