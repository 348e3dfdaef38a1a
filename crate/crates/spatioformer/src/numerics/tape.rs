//! Reverse-mode automatic differentiation over a recorded computation graph.
//!
//! A `Tape` is an arena of nodes, appended in evaluation order, so the
//! insertion order is already a topological order. `Var` is an index into
//! the arena. The graph is rebuilt for every forward pass; `backward`
//! walks it once in reverse and accumulates gradients for every node that
//! (transitively) depends on a trainable leaf.

use crate::error::{Error, Result};
use crate::numerics::rng::RngStream;
use crate::numerics::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Per-channel batch statistics produced by `channel_norm`, used by the
/// caller to maintain running averages.
#[derive(Clone, Debug)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// [m,n] + [1,n], row broadcast over m rows.
    AddRow(Var, Var),
    /// [m,n] * [1,n], row broadcast over m rows.
    MulRow(Var, Var),
    ScaleConst(Var, f64),
    /// Tensor scaled by a 1x1 variable: out = s * x.
    ScaleVar { x: Var, s: Var },
    Relu(Var),
    SoftmaxRows(Var),
    /// Per-row normalization to zero mean / unit variance; inv_std cached per row.
    LayerNormRows { x: Var, inv_std: Vec<f64> },
    /// Elementwise mask of 0.0 or 1/(1-rate).
    Dropout { x: Var, mask: Vec<f64> },
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Transpose(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize, len: usize },
    /// 2-d convolution, stride 1, zero padding (k-1)/2: x [C,H,W], k [O,C,kh,kw], b [O].
    Conv2d { x: Var, k: Var, b: Var },
    /// Per-channel normalization over spatial elements; inv_std cached per channel.
    ChannelNorm { x: Var, inv_std: Vec<f64> },
    /// Per-channel out[c] = x[c]*gamma[c] + beta[c], gamma/beta of shape [C].
    ChannelAffine { x: Var, gamma: Var, beta: Var },
    /// Per-channel out[c] = (x[c] + shift[c]) * scale[c] with constant shift/scale.
    ChannelShiftScale { x: Var, scale: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target with respect to `v`, if any.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant input; no gradient is tracked for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf; `backward` will produce a gradient for it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    // -- operations ---------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        check_row_broadcast(xv, rv, "add_row")?;
        let n = xv.cols();
        let mut data = xv.data().to_vec();
        for (i, d) in data.iter_mut().enumerate() {
            *d += rv.data()[i % n];
        }
        let value = Tensor::from_vec(xv.shape(), data)?;
        let rg = self.requires(x) || self.requires(row);
        Ok(self.push(value, Op::AddRow(x, row), rg))
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        check_row_broadcast(xv, rv, "mul_row")?;
        let n = xv.cols();
        let mut data = xv.data().to_vec();
        for (i, d) in data.iter_mut().enumerate() {
            *d *= rv.data()[i % n];
        }
        let value = Tensor::from_vec(xv.shape(), data)?;
        let rg = self.requires(x) || self.requires(row);
        Ok(self.push(value, Op::MulRow(x, row), rg))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let value = self.value(x).scale(k);
        let rg = self.requires(x);
        self.push(value, Op::ScaleConst(x, k), rg)
    }

    /// out = s * x where `s` is a 1x1 variable (e.g. a learnable balance scalar).
    pub fn scale_var(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "scale_var",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(s).shape().to_vec(),
            });
        }
        let sv = self.value(s).item();
        let value = self.value(x).scale(sv);
        let rg = self.requires(x) || self.requires(s);
        Ok(self.push(value, Op::ScaleVar { x, s }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.requires(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).softmax_rows()?;
        let rg = self.requires(x);
        Ok(self.push(value, Op::SoftmaxRows(x), rg))
    }

    /// Normalize each row of a 2-d tensor to zero mean and unit variance.
    pub fn layer_norm_rows(&mut self, x: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 2 {
            return Err(Error::Numeric("layer_norm_rows expects a 2-d tensor".into()));
        }
        let (m, n) = (xv.rows(), xv.cols());
        let mut data = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        for i in 0..m {
            let row = &xv.data()[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[i] = istd;
            for j in 0..n {
                data[i * n + j] = (row[j] - mean) * istd;
            }
        }
        let value = Tensor::from_vec(xv.shape(), data)?;
        let rg = self.requires(x);
        Ok(self.push(value, Op::LayerNormRows { x, inv_std }, rg))
    }

    /// Inverted dropout. `training == false` or `rate == 0` is the identity
    /// (the input var is returned unchanged, no node is recorded).
    pub fn dropout(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut RngStream,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| if rng.next_f64() < rate { 0.0 } else { keep_scale })
            .collect();
        let data: Vec<f64> = xv
            .data()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let value = Tensor::from_vec(xv.shape(), data)?;
        let rg = self.requires(x);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.requires(x);
        self.push(value, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let value = Tensor::scalar(self.value(x).sum() / n);
        let rg = self.requires(x);
        self.push(value, Op::Mean(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshaped(shape)?;
        let rg = self.requires(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        let rg = self.requires(x);
        self.push(value, Op::Transpose(x), rg)
    }

    /// Stack 2-d blocks with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.cols() != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: pv.shape().to_vec(),
                });
            }
            rows += pv.rows();
            data.extend_from_slice(pv.data());
        }
        let value = Tensor::from_vec(&[rows, cols], data)?;
        let rg = parts.iter().any(|&p| self.requires(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Concatenate 2-d blocks with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: pv.shape().to_vec(),
                });
            }
            for r in 0..rows {
                for c in 0..w {
                    data[r * total + offset + c] = pv.at(r, c);
                }
            }
            offset += w;
        }
        let value = Tensor::from_vec(&[rows, total], data)?;
        let rg = parts.iter().any(|&p| self.requires(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns [start, start+len) of a 2-d tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        if start + len > n {
            return Err(Error::Numeric(format!(
                "slice_cols {start}..{} out of range for {n} columns",
                start + len
            )));
        }
        let mut data = vec![0.0; m * len];
        for r in 0..m {
            for c in 0..len {
                data[r * len + c] = xv.at(r, start + c);
            }
        }
        let value = Tensor::from_vec(&[m, len], data)?;
        let rg = self.requires(x);
        Ok(self.push(value, Op::SliceCols { x, start, len }, rg))
    }

    /// 2-d convolution with stride 1 and zero padding (k-1)/2, so the
    /// spatial extent is preserved. x [C,H,W], kernel [O,C,kh,kw], bias [O].
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (xv, kv, bv) = (self.value(x), self.value(kernel), self.value(bias));
        if xv.shape().len() != 3 || kv.shape().len() != 4 {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: xv.shape().to_vec(),
                rhs: kv.shape().to_vec(),
            });
        }
        let (c_in, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (c_out, kc, kh, kw) = (kv.shape()[0], kv.shape()[1], kv.shape()[2], kv.shape()[3]);
        if kc != c_in || bv.len() != c_out || kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: xv.shape().to_vec(),
                rhs: kv.shape().to_vec(),
            });
        }
        let value = conv2d_forward(xv, kv, bv, c_in, h, w, c_out, kh, kw);
        let rg = self.requires(x) || self.requires(kernel) || self.requires(bias);
        Ok(self.push(value, Op::Conv2d { x, k: kernel, b: bias }, rg))
    }

    /// Normalize each channel of a [C,H,W] tensor over its spatial elements.
    /// Returns the var together with the per-channel batch statistics.
    pub fn channel_norm(&mut self, x: Var, eps: f64) -> Result<(Var, ChannelStats)> {
        let xv = self.value(x);
        if xv.shape().len() != 3 {
            return Err(Error::Numeric("channel_norm expects a 3-d tensor".into()));
        }
        let (c, h, w) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let spatial = h * w;
        let mut data = vec![0.0; c * spatial];
        let mut inv_std = vec![0.0; c];
        let mut stats = ChannelStats {
            mean: vec![0.0; c],
            var: vec![0.0; c],
        };
        for ch in 0..c {
            let xs = &xv.data()[ch * spatial..(ch + 1) * spatial];
            let mean = xs.iter().sum::<f64>() / spatial as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / spatial as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[ch] = istd;
            stats.mean[ch] = mean;
            stats.var[ch] = var;
            for i in 0..spatial {
                data[ch * spatial + i] = (xs[i] - mean) * istd;
            }
        }
        let value = Tensor::from_vec(xv.shape(), data)?;
        let rg = self.requires(x);
        let var = self.push(value, Op::ChannelNorm { x, inv_std }, rg);
        Ok((var, stats))
    }

    /// Per-channel affine out[c] = x[c]*gamma[c] + beta[c] on a [C,H,W] tensor,
    /// gamma and beta of shape [C].
    pub fn channel_affine(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let c = xv.shape()[0];
        if gv.len() != c || bv.len() != c {
            return Err(Error::ShapeMismatch {
                op: "channel_affine",
                lhs: xv.shape().to_vec(),
                rhs: gv.shape().to_vec(),
            });
        }
        let spatial = xv.len() / c;
        let mut data = vec![0.0; xv.len()];
        for ch in 0..c {
            let (g, b) = (gv.data()[ch], bv.data()[ch]);
            for i in 0..spatial {
                data[ch * spatial + i] = xv.data()[ch * spatial + i] * g + b;
            }
        }
        let value = Tensor::from_vec(xv.shape(), data)?;
        let rg = self.requires(x) || self.requires(gamma) || self.requires(beta);
        Ok(self.push(value, Op::ChannelAffine { x, gamma, beta }, rg))
    }

    /// Per-channel out[c] = (x[c] + shift[c]) * scale[c] with constants,
    /// used for normalization against stored running statistics.
    pub fn channel_shift_scale(&mut self, x: Var, shift: &[f64], scale: &[f64]) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.shape()[0];
        if shift.len() != c || scale.len() != c {
            return Err(Error::Numeric(format!(
                "channel_shift_scale expects {c} channel constants"
            )));
        }
        let spatial = xv.len() / c;
        let mut data = vec![0.0; xv.len()];
        for ch in 0..c {
            for i in 0..spatial {
                data[ch * spatial + i] = (xv.data()[ch * spatial + i] + shift[ch]) * scale[ch];
            }
        }
        let value = Tensor::from_vec(xv.shape(), data)?;
        let rg = self.requires(x);
        Ok(self.push(
            value,
            Op::ChannelShiftScale {
                x,
                scale: scale.to_vec(),
            },
            rg,
        ))
    }

    // -- backward -----------------------------------------------------------

    /// Reverse pass from a scalar target. Gradients are then available via
    /// `grad` for every var that influences the target through a trainable
    /// leaf.
    pub fn backward(&mut self, target: Var) -> Result<()> {
        if self.value(target).len() != 1 {
            return Err(Error::Numeric(format!(
                "backward target must be scalar, got {:?}",
                self.value(target).shape()
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[target.0] = Some(Tensor::full(self.value(target).shape(), 1.0));

        for idx in (0..=target.0).rev() {
            let grad_out = match self.grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[idx].requires_grad {
                self.grads[idx] = Some(grad_out);
                continue;
            }
            self.propagate(idx, &grad_out)?;
            self.grads[idx] = Some(grad_out);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor) -> Result<()> {
        if !self.requires(v) {
            return Ok(());
        }
        match self.grads[v.0].take() {
            Some(existing) => self.grads[v.0] = Some(existing.add(&g)?),
            None => self.grads[v.0] = Some(g),
        }
        Ok(())
    }

    fn propagate(&mut self, idx: usize, grad_out: &Tensor) -> Result<()> {
        // Values are read before mutation of the grad table; ops only
        // reference earlier nodes so no aliasing is possible.
        match &self.nodes[idx].op {
            Op::Leaf => Ok(()),
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let ga = grad_out.matmul(&self.value(b).transpose())?;
                let gb = self.value(a).transpose().matmul(grad_out)?;
                self.accumulate(a, ga)?;
                self.accumulate(b, gb)
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, grad_out.clone())?;
                self.accumulate(b, grad_out.clone())
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, grad_out.clone())?;
                self.accumulate(b, grad_out.scale(-1.0))
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let ga = grad_out.mul(self.value(b))?;
                let gb = grad_out.mul(self.value(a))?;
                self.accumulate(a, ga)?;
                self.accumulate(b, gb)
            }
            Op::AddRow(x, row) => {
                let (x, row) = (*x, *row);
                let n = self.value(row).len();
                let mut rg = vec![0.0; n];
                for (i, g) in grad_out.data().iter().enumerate() {
                    rg[i % n] += g;
                }
                self.accumulate(x, grad_out.clone())?;
                self.accumulate(row, Tensor::from_vec(&[1, n], rg)?)
            }
            Op::MulRow(x, row) => {
                let (x, row) = (*x, *row);
                let n = self.value(row).len();
                let xv = self.value(x);
                let rv = self.value(row);
                let mut gx = vec![0.0; xv.len()];
                let mut rg = vec![0.0; n];
                for (i, g) in grad_out.data().iter().enumerate() {
                    gx[i] = g * rv.data()[i % n];
                    rg[i % n] += g * xv.data()[i];
                }
                let gx = Tensor::from_vec(xv.shape(), gx)?;
                self.accumulate(x, gx)?;
                self.accumulate(row, Tensor::from_vec(&[1, n], rg)?)
            }
            Op::ScaleConst(x, k) => {
                let (x, k) = (*x, *k);
                self.accumulate(x, grad_out.scale(k))
            }
            Op::ScaleVar { x, s } => {
                let (x, s) = (*x, *s);
                let sv = self.value(s).item();
                let gx = grad_out.scale(sv);
                let gs = grad_out
                    .data()
                    .iter()
                    .zip(self.value(x).data())
                    .map(|(g, xv)| g * xv)
                    .sum::<f64>();
                self.accumulate(x, gx)?;
                self.accumulate(s, Tensor::scalar(gs))
            }
            Op::Relu(x) => {
                let x = *x;
                let gx = Tensor::from_vec(
                    self.value(x).shape(),
                    self.value(x)
                        .data()
                        .iter()
                        .zip(grad_out.data())
                        .map(|(v, g)| if *v > 0.0 { *g } else { 0.0 })
                        .collect(),
                )?;
                self.accumulate(x, gx)
            }
            Op::SoftmaxRows(x) => {
                let x = *x;
                let y = &self.nodes[idx].value;
                let (m, n) = (y.rows(), y.cols());
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    let yr = &y.data()[i * n..(i + 1) * n];
                    let gr = &grad_out.data()[i * n..(i + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        gx[i * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                let gx = Tensor::from_vec(y.shape(), gx)?;
                self.accumulate(x, gx)
            }
            Op::LayerNormRows { x, inv_std } => {
                let x = *x;
                let inv_std = inv_std.clone();
                let y = &self.nodes[idx].value;
                let (m, n) = (y.rows(), y.cols());
                let nf = n as f64;
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    let yr = &y.data()[i * n..(i + 1) * n];
                    let gr = &grad_out.data()[i * n..(i + 1) * n];
                    let g_mean: f64 = gr.iter().sum::<f64>() / nf;
                    let gy_mean: f64 = gr.iter().zip(yr).map(|(g, yv)| g * yv).sum::<f64>() / nf;
                    for j in 0..n {
                        gx[i * n + j] = inv_std[i] * (gr[j] - g_mean - yr[j] * gy_mean);
                    }
                }
                let gx = Tensor::from_vec(y.shape(), gx)?;
                self.accumulate(x, gx)
            }
            Op::Dropout { x, mask } => {
                let x = *x;
                let gx = Tensor::from_vec(
                    grad_out.shape(),
                    grad_out
                        .data()
                        .iter()
                        .zip(mask)
                        .map(|(g, m)| g * m)
                        .collect(),
                )?;
                self.accumulate(x, gx)
            }
            Op::Sum(x) => {
                let x = *x;
                let g = grad_out.item();
                let gx = Tensor::full(self.value(x).shape(), g);
                self.accumulate(x, gx)
            }
            Op::Mean(x) => {
                let x = *x;
                let n = self.value(x).len() as f64;
                let gx = Tensor::full(self.value(x).shape(), grad_out.item() / n);
                self.accumulate(x, gx)
            }
            Op::Reshape(x) => {
                let x = *x;
                let gx = grad_out.reshaped(self.value(x).shape())?;
                self.accumulate(x, gx)
            }
            Op::Transpose(x) => {
                let x = *x;
                self.accumulate(x, grad_out.transpose())
            }
            Op::ConcatRows(parts) => {
                let parts = parts.clone();
                let cols = grad_out.cols();
                let mut row = 0;
                for p in parts {
                    let rows = self.value(p).rows();
                    let slice =
                        grad_out.data()[row * cols..(row + rows) * cols].to_vec();
                    row += rows;
                    let g = Tensor::from_vec(&[rows, cols], slice)?;
                    self.accumulate(p, g)?;
                }
                Ok(())
            }
            Op::ConcatCols(parts) => {
                let parts = parts.clone();
                let rows = grad_out.rows();
                let total = grad_out.cols();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(p).cols();
                    let mut data = vec![0.0; rows * w];
                    for r in 0..rows {
                        for c in 0..w {
                            data[r * w + c] = grad_out.data()[r * total + offset + c];
                        }
                    }
                    offset += w;
                    self.accumulate(p, Tensor::from_vec(&[rows, w], data)?)?;
                }
                Ok(())
            }
            Op::SliceCols { x, start, len } => {
                let (x, start, len) = (*x, *start, *len);
                let xv = self.value(x);
                let (m, n) = (xv.rows(), xv.cols());
                let mut data = vec![0.0; m * n];
                for r in 0..m {
                    for c in 0..len {
                        data[r * n + start + c] = grad_out.at(r, c);
                    }
                }
                self.accumulate(x, Tensor::from_vec(&[m, n], data)?)
            }
            Op::Conv2d { x, k, b } => {
                let (x, k, b) = (*x, *k, *b);
                let (gx, gk, gb) = conv2d_backward(self.value(x), self.value(k), grad_out);
                self.accumulate(x, gx)?;
                self.accumulate(k, gk)?;
                let _ = b;
                self.accumulate(b, gb)
            }
            Op::ChannelNorm { x, inv_std } => {
                let x = *x;
                let inv_std = inv_std.clone();
                let y = &self.nodes[idx].value;
                let c = y.shape()[0];
                let spatial = y.len() / c;
                let nf = spatial as f64;
                let mut gx = vec![0.0; y.len()];
                for ch in 0..c {
                    let ys = &y.data()[ch * spatial..(ch + 1) * spatial];
                    let gs = &grad_out.data()[ch * spatial..(ch + 1) * spatial];
                    let g_mean: f64 = gs.iter().sum::<f64>() / nf;
                    let gy_mean: f64 =
                        gs.iter().zip(ys).map(|(g, yv)| g * yv).sum::<f64>() / nf;
                    for i in 0..spatial {
                        gx[ch * spatial + i] =
                            inv_std[ch] * (gs[i] - g_mean - ys[i] * gy_mean);
                    }
                }
                let gx = Tensor::from_vec(y.shape(), gx)?;
                self.accumulate(x, gx)
            }
            Op::ChannelAffine { x, gamma, beta } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let xv = self.value(x);
                let gv = self.value(gamma);
                let c = xv.shape()[0];
                let spatial = xv.len() / c;
                let mut gx = vec![0.0; xv.len()];
                let mut gg = vec![0.0; c];
                let mut gb = vec![0.0; c];
                for ch in 0..c {
                    let g = gv.data()[ch];
                    for i in 0..spatial {
                        let go = grad_out.data()[ch * spatial + i];
                        gx[ch * spatial + i] = go * g;
                        gg[ch] += go * xv.data()[ch * spatial + i];
                        gb[ch] += go;
                    }
                }
                self.accumulate(x, Tensor::from_vec(xv.shape(), gx)?)?;
                self.accumulate(gamma, Tensor::from_vec(&[c], gg)?)?;
                self.accumulate(beta, Tensor::from_vec(&[c], gb)?)
            }
            Op::ChannelShiftScale { x, scale } => {
                let x = *x;
                let scale = scale.clone();
                let xv = self.value(x);
                let c = xv.shape()[0];
                let spatial = xv.len() / c;
                let mut gx = vec![0.0; xv.len()];
                for ch in 0..c {
                    for i in 0..spatial {
                        gx[ch * spatial + i] = grad_out.data()[ch * spatial + i] * scale[ch];
                    }
                }
                self.accumulate(x, Tensor::from_vec(xv.shape(), gx)?)
            }
        }
    }
}

fn check_row_broadcast(x: &Tensor, row: &Tensor, op: &'static str) -> Result<()> {
    if x.shape().len() != 2 || row.shape().len() != 2 || row.rows() != 1 || row.cols() != x.cols()
    {
        return Err(Error::ShapeMismatch {
            op,
            lhs: x.shape().to_vec(),
            rhs: row.shape().to_vec(),
        });
    }
    Ok(())
}

fn conv2d_forward(
    x: &Tensor,
    k: &Tensor,
    b: &Tensor,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
) -> Tensor {
    let (ph, pw) = (kh / 2, kw / 2);
    let mut out = vec![0.0; c_out * h * w];
    for o in 0..c_out {
        for y in 0..h {
            for xx in 0..w {
                let mut acc = b.data()[o];
                for c in 0..c_in {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let sy = y as isize + dy as isize - ph as isize;
                            let sx = xx as isize + dx as isize - pw as isize;
                            if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let xi = (c * h + sy as usize) * w + sx as usize;
                            let ki = ((o * c_in + c) * kh + dy) * kw + dx;
                            acc += x.data()[xi] * k.data()[ki];
                        }
                    }
                }
                out[(o * h + y) * w + xx] = acc;
            }
        }
    }
    Tensor::from_vec(&[c_out, h, w], out).expect("conv2d output shape")
}

fn conv2d_backward(x: &Tensor, k: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (c_out, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let (ph, pw) = (kh / 2, kw / 2);
    let mut gx = vec![0.0; x.len()];
    let mut gk = vec![0.0; k.len()];
    let mut gb = vec![0.0; c_out];
    for o in 0..c_out {
        for y in 0..h {
            for xx in 0..w {
                let go = grad_out.data()[(o * h + y) * w + xx];
                gb[o] += go;
                for c in 0..c_in {
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let sy = y as isize + dy as isize - ph as isize;
                            let sx = xx as isize + dx as isize - pw as isize;
                            if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let xi = (c * h + sy as usize) * w + sx as usize;
                            let ki = ((o * c_in + c) * kh + dy) * kw + dx;
                            gx[xi] += go * k.data()[ki];
                            gk[ki] += go * x.data()[xi];
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::from_vec(x.shape(), gx).expect("conv2d grad x"),
        Tensor::from_vec(k.shape(), gk).expect("conv2d grad k"),
        Tensor::from_vec(&[c_out], gb).expect("conv2d grad b"),
    )
}
