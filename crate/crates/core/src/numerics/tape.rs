//! Recorded computation graph with reverse-mode accumulation.
//!
//! Every primitive evaluates eagerly and appends one node. Parents always
//! precede children, so record order is a topological order and backward is
//! a single reverse sweep.

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unary {
    Sigmoid,
    Tanh,
    Relu,
    Exp,
    Log,
    Square,
}

impl Unary {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Unary::Sigmoid => sigmoid(v),
            Unary::Tanh => v.tanh(),
            Unary::Relu => v.max(0.0),
            Unary::Exp => v.exp(),
            Unary::Log => v.ln(),
            Unary::Square => v * v,
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Square => 2.0 * x,
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Const,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Unary(Var, Unary),
    Softmax(Var),
    LogSoftmax(Var),
    Conv1d { x: Var, kernel: Var, bias: Var },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows { x: Var, start: usize },
    Gather { x: Var, index: Vec<usize> },
    Transpose(Var),
    Sum(Var),
    Reshape(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Per-step computation record. Discard after [`Tape::backward`].
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradient buffers produced by [`Tape::backward`], keyed by node.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient w.r.t. `v`; zeros when `v` does not reach the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Whether a buffer exists for `v` (i.e. `v` is reachable from the loss).
    pub fn reached(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}

fn two_d(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(Error::ShapeMismatch {
            op,
            left: s.to_vec(),
            right: vec![0, 0],
        }),
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    f(buf);
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Const)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = two_d(self.value(a), "matmul")?;
        let (k2, n) = two_d(self.value(b), "matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &bj) in orow.iter_mut().zip(brow) {
                    *o += x * bj;
                }
            }
        }
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b)))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(t, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// Adds a length-`n` bias to every row of an `[m, n]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = two_d(self.value(x), "add_bias")?;
        if self.value(bias).len() != n {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                left: vec![m, n],
                right: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias).data();
        let data: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % n])
            .collect();
        Ok(self.push(Tensor::new(vec![m, n], data)?, Op::AddBias(x, bias)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let t = self.value(x).map(|v| v * factor);
        self.push(t, Op::Scale(x, factor))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x).map(|v| v + c);
        self.push(t, Op::AddScalar(x))
    }

    /// Pointwise nonlinearity; `Log` rejects nonpositive input.
    pub fn unary(&mut self, x: Var, kind: Unary) -> Result<Var> {
        if kind == Unary::Log {
            if let Some((index, &value)) = self
                .value(x)
                .data()
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v > 0.0))
            {
                return Err(Error::LogNonPositive { value, index });
            }
        }
        let t = self.value(x).map(|v| kind.apply(v));
        Ok(self.push(t, Op::Unary(x, kind)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid).expect("infallible")
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Tanh).expect("infallible")
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp).expect("infallible")
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Square).expect("infallible")
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Unary::Log)
    }

    /// Normalized exponentials over the last extent (max-subtracted).
    pub fn softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (_, n) = t.rows_cols();
        let mut data = t.data().to_vec();
        for slice in data.chunks_mut(n) {
            softmax_in_place(slice);
        }
        let out = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Softmax(x))
    }

    /// `x - logsumexp(x)` over the last extent.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (_, n) = t.rows_cols();
        let mut data = t.data().to_vec();
        for slice in data.chunks_mut(n) {
            let lse = log_sum_exp(slice);
            slice.iter_mut().for_each(|v| *v -= lse);
        }
        let out = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::LogSoftmax(x))
    }

    /// Causal 1-D convolution over time.
    ///
    /// `x` is `[T, c_in]`, `kernel` is `[w, c_in, c_out]` with tap `j` applied
    /// to `x[t - j]`, `bias` holds `c_out` values. Indices before 0 read zero.
    pub fn conv1d_causal(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (t_len, c_in) = two_d(self.value(x), "conv1d_causal")?;
        let (w, k_in, c_out) = match self.shape(kernel) {
            [w, ci, co] => (*w, *ci, *co),
            s => {
                return Err(Error::ShapeMismatch {
                    op: "conv1d_causal",
                    left: vec![t_len, c_in],
                    right: s.to_vec(),
                })
            }
        };
        if k_in != c_in || self.value(bias).len() != c_out {
            return Err(Error::ShapeMismatch {
                op: "conv1d_causal",
                left: vec![t_len, c_in],
                right: self.shape(kernel).to_vec(),
            });
        }
        let xv = self.value(x).data();
        let kv = self.value(kernel).data();
        let bv = self.value(bias).data();
        let mut out = vec![0.0; t_len * c_out];
        for t in 0..t_len {
            let orow = &mut out[t * c_out..(t + 1) * c_out];
            orow.copy_from_slice(bv);
            for j in 0..w.min(t + 1) {
                let xrow = &xv[(t - j) * c_in..(t - j + 1) * c_in];
                for (c, &xc) in xrow.iter().enumerate() {
                    if xc == 0.0 {
                        continue;
                    }
                    let krow = &kv[(j * c_in + c) * c_out..(j * c_in + c + 1) * c_out];
                    for (o, &k) in orow.iter_mut().zip(krow) {
                        *o += xc * k;
                    }
                }
            }
        }
        let out = Tensor::new(vec![t_len, c_out], out)?;
        Ok(self.push(out, Op::Conv1d { x, kernel, bias }))
    }

    /// Concatenates `[m, n_i]` matrices along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = two_d(self.value(parts[0]), "concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = two_d(self.value(p), "concat_cols")?;
            if r != m {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(parts[0]).to_vec(),
                    right: vec![r, c],
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &c) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * c..(i + 1) * c]);
            }
        }
        let out = Tensor::new(vec![m, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Stacks `[m_i, n]` matrices along rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let n = two_d(self.value(parts[0]), "concat_rows")?.1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = two_d(self.value(p), "concat_rows")?;
            if c != n {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape(parts[0]).to_vec(),
                    right: vec![r, c],
                });
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(vec![rows, n], data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Rows `start..start + len` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = two_d(self.value(x), "slice_rows")?;
        if len == 0 || start + len > m {
            return Err(Error::InvalidTensor(format!(
                "row slice {start}..{} out of {m}",
                start + len
            )));
        }
        let data = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let out = Tensor::new(vec![len, n], data)?;
        Ok(self.push(out, Op::SliceRows { x, start }))
    }

    /// Picks flat elements of `x` into a `[1, index.len()]` row.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let src = self.value(x).data();
        if let Some(&bad) = index.iter().find(|&&i| i >= src.len()) {
            return Err(Error::InvalidTensor(format!(
                "gather index {bad} out of {}",
                src.len()
            )));
        }
        let data = index.iter().map(|&i| src[i]).collect();
        let out = Tensor::new(vec![1, index.len()], data)?;
        Ok(self.push(
            out,
            Op::Gather {
                x,
                index: index.to_vec(),
            },
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = two_d(self.value(x), "transpose")?;
        let src = self.value(x).data();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = src[i * n + j];
            }
        }
        let out = Tensor::new(vec![n, m], data)?;
        Ok(self.push(out, Op::Transpose(x)))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = Tensor::new(shape.to_vec(), self.value(x).data().to_vec())?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// Reverse sweep from a scalar loss.
    ///
    /// The tape is not modified, so repeated calls yield identical buffers.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..n).rev() {
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else {
                continue;
            };
            let node = &self.nodes[i];
            let val = |v: Var| self.nodes[v.0].value.data();
            let len = |v: Var| self.nodes[v.0].value.len();
            match &node.op {
                Op::Leaf | Op::Const => {}
                Op::MatMul(a, b) => {
                    let (m, k) = self.nodes[a.0].value.rows_cols();
                    let nn = node.value.rows_cols().1;
                    let (av, bv) = (val(*a), val(*b));
                    accumulate(&mut lower[a.0], m * k, |ga| {
                        for r in 0..m {
                            let grow = &g[r * nn..(r + 1) * nn];
                            for p in 0..k {
                                let brow = &bv[p * nn..(p + 1) * nn];
                                ga[r * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    });
                    accumulate(&mut lower[b.0], k * nn, |gb| {
                        for r in 0..m {
                            let grow = &g[r * nn..(r + 1) * nn];
                            for p in 0..k {
                                let x = av[r * k + p];
                                if x == 0.0 {
                                    continue;
                                }
                                for (o, &gj) in gb[p * nn..(p + 1) * nn].iter_mut().zip(grow) {
                                    *o += x * gj;
                                }
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    accumulate(&mut lower[a.0], g.len(), |ga| add_into(ga, g));
                    accumulate(&mut lower[b.0], g.len(), |gb| add_into(gb, g));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut lower[a.0], g.len(), |ga| add_into(ga, g));
                    accumulate(&mut lower[b.0], g.len(), |gb| {
                        gb.iter_mut().zip(g).for_each(|(o, v)| *o -= v)
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    accumulate(&mut lower[a.0], g.len(), |ga| {
                        for ((o, gv), y) in ga.iter_mut().zip(g).zip(bv) {
                            *o += gv * y;
                        }
                    });
                    accumulate(&mut lower[b.0], g.len(), |gb| {
                        for ((o, gv), x) in gb.iter_mut().zip(g).zip(av) {
                            *o += gv * x;
                        }
                    });
                }
                Op::AddBias(x, b) => {
                    let nb = len(*b);
                    accumulate(&mut lower[x.0], g.len(), |gx| add_into(gx, g));
                    accumulate(&mut lower[b.0], nb, |gb| {
                        for (i, gv) in g.iter().enumerate() {
                            gb[i % nb] += gv;
                        }
                    });
                }
                Op::Scale(x, f) => {
                    accumulate(&mut lower[x.0], g.len(), |gx| {
                        gx.iter_mut().zip(g).for_each(|(o, v)| *o += f * v)
                    });
                }
                Op::AddScalar(x) => {
                    accumulate(&mut lower[x.0], g.len(), |gx| add_into(gx, g));
                }
                Op::Unary(x, kind) => {
                    let xv = val(*x);
                    let yv = node.value.data();
                    accumulate(&mut lower[x.0], g.len(), |gx| {
                        for i in 0..gx.len() {
                            gx[i] += g[i] * kind.derivative(xv[i], yv[i]);
                        }
                    });
                }
                Op::Softmax(x) => {
                    let y = node.value.data();
                    let (_, nn) = node.value.rows_cols();
                    accumulate(&mut lower[x.0], g.len(), |gx| {
                        for ((gs, ys), os) in g.chunks(nn).zip(y.chunks(nn)).zip(gx.chunks_mut(nn)) {
                            let dot: f64 = gs.iter().zip(ys).map(|(a, b)| a * b).sum();
                            for j in 0..nn {
                                os[j] += ys[j] * (gs[j] - dot);
                            }
                        }
                    });
                }
                Op::LogSoftmax(x) => {
                    let y = node.value.data();
                    let (_, nn) = node.value.rows_cols();
                    accumulate(&mut lower[x.0], g.len(), |gx| {
                        for ((gs, ys), os) in g.chunks(nn).zip(y.chunks(nn)).zip(gx.chunks_mut(nn)) {
                            let total: f64 = gs.iter().sum();
                            for j in 0..nn {
                                os[j] += gs[j] - ys[j].exp() * total;
                            }
                        }
                    });
                }
                Op::Conv1d { x, kernel, bias } => {
                    let (t_len, c_in) = self.nodes[x.0].value.rows_cols();
                    let kshape = self.nodes[kernel.0].value.shape();
                    let (w, c_out) = (kshape[0], kshape[2]);
                    let (xv, kv) = (val(*x), val(*kernel));
                    accumulate(&mut lower[x.0], t_len * c_in, |gx| {
                        for t in 0..t_len {
                            let grow = &g[t * c_out..(t + 1) * c_out];
                            for j in 0..w.min(t + 1) {
                                for c in 0..c_in {
                                    let krow = &kv[(j * c_in + c) * c_out..(j * c_in + c + 1) * c_out];
                                    gx[(t - j) * c_in + c] +=
                                        grow.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>();
                                }
                            }
                        }
                    });
                    accumulate(&mut lower[kernel.0], w * c_in * c_out, |gk| {
                        for t in 0..t_len {
                            let grow = &g[t * c_out..(t + 1) * c_out];
                            for j in 0..w.min(t + 1) {
                                for c in 0..c_in {
                                    let xc = xv[(t - j) * c_in + c];
                                    if xc == 0.0 {
                                        continue;
                                    }
                                    let off = (j * c_in + c) * c_out;
                                    for (o, gv) in gk[off..off + c_out].iter_mut().zip(grow) {
                                        *o += xc * gv;
                                    }
                                }
                            }
                        }
                    });
                    accumulate(&mut lower[bias.0], c_out, |gb| {
                        for grow in g.chunks(c_out) {
                            add_into(gb, grow);
                        }
                    });
                }
                Op::ConcatCols(parts) => {
                    let (m, total) = node.value.rows_cols();
                    let mut off = 0;
                    for p in parts {
                        let c = self.nodes[p.0].value.rows_cols().1;
                        accumulate(&mut lower[p.0], m * c, |gp| {
                            for r in 0..m {
                                add_into(
                                    &mut gp[r * c..(r + 1) * c],
                                    &g[r * total + off..r * total + off + c],
                                );
                            }
                        });
                        off += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let l = len(*p);
                        accumulate(&mut lower[p.0], l, |gp| add_into(gp, &g[off..off + l]));
                        off += l;
                    }
                }
                Op::SliceRows { x, start } => {
                    let n = node.value.rows_cols().1;
                    accumulate(&mut lower[x.0], len(*x), |gx| {
                        add_into(&mut gx[start * n..start * n + g.len()], g)
                    });
                }
                Op::Gather { x, index } => {
                    accumulate(&mut lower[x.0], len(*x), |gx| {
                        for (&i, gv) in index.iter().zip(g) {
                            gx[i] += gv;
                        }
                    });
                }
                Op::Transpose(x) => {
                    let (m, n) = self.nodes[x.0].value.rows_cols();
                    accumulate(&mut lower[x.0], m * n, |gx| {
                        for i in 0..m {
                            for j in 0..n {
                                gx[i * n + j] += g[j * m + i];
                            }
                        }
                    });
                }
                Op::Sum(x) => {
                    let s = g[0];
                    accumulate(&mut lower[x.0], len(*x), |gx| gx.iter_mut().for_each(|o| *o += s));
                }
                Op::Reshape(x) => {
                    accumulate(&mut lower[x.0], g.len(), |gx| add_into(gx, g));
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in xs.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    xs.iter_mut().for_each(|v| *v /= total);
}

/// Softmax over a plain slice.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut out = xs.to_vec();
    softmax_in_place(&mut out);
    out
}
