//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation of one forward pass. Nodes are only
//! ever appended, so a node's inputs always precede it and reverse insertion
//! order is a valid topological order for the backward sweep. Sequence
//! tensors are laid out `[channels, frames]`.

use super::params::{ParamId, Params};
use super::tensor::Tensor;
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
    Tanh,
    Elu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvGeometry {
    pub fn same(kernel: usize, dilation: usize) -> Self {
        Self { stride: 1, padding: dilation * (kernel - 1) / 2, dilation }
    }

    pub fn strided(stride: usize, padding: usize) -> Self {
        Self { stride, padding, dilation: 1 }
    }

    fn out_len(&self, t_in: usize, k: usize) -> Option<usize> {
        let span = self.dilation * (k - 1) + 1;
        let padded = t_in + 2 * self.padding;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul { w: Var, x: Var },
    AddBias { x: Var, b: Var },
    Conv1d { x: Var, w: Var, geo: ConvGeometry },
    ConvTranspose1d { x: Var, w: Var, stride: usize, padding: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Clamp { x: Var, lo: f64, hi: f64 },
    ConcatRows(Var, Var),
    RepeatCols(Var, usize),
    Square(Var),
    Abs(Var),
    Mean(Var),
    Sum(Var),
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match *self {
            Op::Leaf | Op::Param(_) => vec![],
            Op::MatMul { w, x } => vec![w, x],
            Op::AddBias { x, b } => vec![x, b],
            Op::Conv1d { x, w, .. } | Op::ConvTranspose1d { x, w, .. } => vec![x, w],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::ConcatRows(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::Act(a, _)
            | Op::Clamp { x: a, .. }
            | Op::RepeatCols(a, _)
            | Op::Square(a)
            | Op::Abs(a)
            | Op::Mean(a)
            | Op::Sum(a) => vec![a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recorded forward computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

/// `C (+)= op(A) * op(B)` with row-major storage. `ta` means `A` is stored
/// `[k, m]`; `tb` means `B` is stored `[n, k]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths were checked against the declared extents and the
    // strides describe exactly those row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f64], c_in: usize, t_in: usize, k: usize, geo: ConvGeometry, t_out: usize) -> Vec<f64> {
    let mut col = vec![0.0; c_in * k * t_out];
    for ci in 0..c_in {
        let xr = &x[ci * t_in..(ci + 1) * t_in];
        for kk in 0..k {
            let row = &mut col[(ci * k + kk) * t_out..(ci * k + kk + 1) * t_out];
            let off = (kk * geo.dilation) as isize - geo.padding as isize;
            for (t, slot) in row.iter_mut().enumerate() {
                let src = (t * geo.stride) as isize + off;
                if src >= 0 && (src as usize) < t_in {
                    *slot = xr[src as usize];
                }
            }
        }
    }
    col
}

fn col2im(col: &[f64], c_in: usize, t_in: usize, k: usize, geo: ConvGeometry, t_out: usize, dx: &mut [f64]) {
    for ci in 0..c_in {
        for kk in 0..k {
            let row = &col[(ci * k + kk) * t_out..(ci * k + kk + 1) * t_out];
            let off = (kk * geo.dilation) as isize - geo.padding as isize;
            for (t, &g) in row.iter().enumerate() {
                let src = (t * geo.stride) as isize + off;
                if src >= 0 && (src as usize) < t_in {
                    dx[ci * t_in + src as usize] += g;
                }
            }
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
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

    fn check(&self, vars: &[Var]) -> Result<()> {
        for v in vars {
            if v.0 >= self.nodes.len() {
                bail!(Structure, "variable {} does not belong to this graph", v.0);
            }
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            bail!(Numeric, "non-finite value produced by {:?}", op);
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn shape2(&self, v: Var) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        match s.len() {
            2 => Ok((s[0], s[1])),
            1 => Ok((s[0], 1)),
            _ => bail!(Shape, "expected a [channels, frames] tensor, got {:?}", s),
        }
    }

    /// Constant input; gradients are tracked but never written anywhere.
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, params: &Params, id: ParamId) -> Result<Var> {
        self.push(params.value(id).clone(), Op::Param(id))
    }

    /// `w [out, in] * x [in, frames]`.
    pub fn matmul(&mut self, w: Var, x: Var) -> Result<Var> {
        self.check(&[w, x])?;
        let (o, i) = self.shape2(w)?;
        let (xi, t) = self.shape2(x)?;
        if i != xi {
            bail!(Shape, "matmul: weight is {o}x{i}, input has {xi} rows");
        }
        let mut y = vec![0.0; o * t];
        gemm(o, i, t, self.value(w).data(), false, self.value(x).data(), false, &mut y, false);
        self.push(Tensor::matrix(o, t, y)?, Op::MatMul { w, x })
    }

    /// Adds a per-channel bias (`b` holds one value per row of `x`).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        self.check(&[x, b])?;
        let (c, t) = self.shape2(x)?;
        if self.value(b).len() != c {
            bail!(Shape, "bias has {} values for {c} channels", self.value(b).len());
        }
        let mut y = self.value(x).clone();
        let bv = self.value(b).data().to_vec();
        for (row, bb) in y.data_mut().chunks_mut(t.max(1)).zip(&bv) {
            row.iter_mut().for_each(|v| *v += bb);
        }
        self.push(y, Op::AddBias { x, b })
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(w, x)?;
        match b {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    /// `x [c_in, t]`, `w [c_out, c_in, k]`.
    pub fn conv1d(&mut self, x: Var, w: Var, geo: ConvGeometry) -> Result<Var> {
        self.check(&[x, w])?;
        let (c_in, t_in) = self.shape2(x)?;
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 3 || ws[1] != c_in {
            bail!(Shape, "conv1d: kernel {:?} for {c_in} input channels", ws);
        }
        if geo.stride == 0 || geo.dilation == 0 {
            bail!(Config, "conv1d: stride and dilation must be positive");
        }
        let (c_out, k) = (ws[0], ws[2]);
        let Some(t_out) = geo.out_len(t_in, k) else {
            bail!(Shape, "conv1d: input of {t_in} frames is shorter than the kernel span");
        };
        let col = im2col(self.value(x).data(), c_in, t_in, k, geo, t_out);
        let mut y = vec![0.0; c_out * t_out];
        gemm(c_out, c_in * k, t_out, self.value(w).data(), false, &col, false, &mut y, false);
        self.push(Tensor::matrix(c_out, t_out, y)?, Op::Conv1d { x, w, geo })
    }

    /// `x [c_in, t]`, `w [c_in, c_out, k]`; output length `(t-1)s - 2p + k`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, stride: usize, padding: usize) -> Result<Var> {
        self.check(&[x, w])?;
        let (c_in, t_in) = self.shape2(x)?;
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 3 || ws[0] != c_in {
            bail!(Shape, "conv_transpose1d: kernel {:?} for {c_in} input channels", ws);
        }
        let (c_out, k) = (ws[1], ws[2]);
        let full = (t_in.max(1) - 1) * stride + k;
        if stride == 0 || full < 2 * padding || t_in == 0 {
            bail!(Shape, "conv_transpose1d: invalid geometry");
        }
        let t_out = full - 2 * padding;
        let mut cols = vec![0.0; c_out * k * t_in];
        gemm(c_out * k, c_in, t_in, self.value(w).data(), true, self.value(x).data(), false, &mut cols, false);
        let mut y = vec![0.0; c_out * t_out];
        for co in 0..c_out {
            for kk in 0..k {
                let row = &cols[(co * k + kk) * t_in..(co * k + kk + 1) * t_in];
                for (t, &v) in row.iter().enumerate() {
                    let dst = (t * stride + kk) as isize - padding as isize;
                    if dst >= 0 && (dst as usize) < t_out {
                        y[co * t_out + dst as usize] += v;
                    }
                }
            }
        }
        self.push(Tensor::matrix(c_out, t_out, y)?, Op::ConvTranspose1d { x, w, stride, padding })
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.check(&[a, b])?;
        if self.value(a).shape() != self.value(b).shape() {
            bail!(Shape, "elementwise op on {:?} and {:?}", self.value(a).shape(), self.value(b).shape());
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        self.push(t, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.check(&[a])?;
        let t = self.value(a).map(|v| v * s);
        self.push(t, Op::Scale(a, s))
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        self.check(&[a])?;
        let t = self.value(a).map(|v| kind.apply(v));
        self.push(t, Op::Act(a, kind))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.check(&[a])?;
        let t = self.value(a).map(|v| v.clamp(lo, hi));
        self.push(t, Op::Clamp { x: a, lo, hi })
    }

    /// Stacks `a [c1, t]` on top of `b [c2, t]`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let (ca, ta) = self.shape2(a)?;
        let (cb, tb) = self.shape2(b)?;
        if ta != tb {
            bail!(Shape, "concat: {ta} vs {tb} frames");
        }
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        self.push(Tensor::matrix(ca + cb, ta, data)?, Op::ConcatRows(a, b))
    }

    /// Nearest-neighbour upsampling along frames.
    pub fn repeat_cols(&mut self, a: Var, factor: usize) -> Result<Var> {
        self.check(&[a])?;
        let (c, t) = self.shape2(a)?;
        if factor == 0 {
            bail!(Config, "repeat factor must be positive");
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(c * t * factor);
        for row in src.chunks(t.max(1)).take(c) {
            for &v in row {
                data.extend(std::iter::repeat_n(v, factor));
            }
        }
        self.push(Tensor::matrix(c, t * factor, data)?, Op::RepeatCols(a, factor))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.check(&[a])?;
        let t = self.value(a).map(|v| v * v);
        self.push(t, Op::Square(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.check(&[a])?;
        let t = self.value(a).map(f64::abs);
        self.push(t, Op::Abs(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.check(&[a])?;
        let v = self.value(a);
        if v.is_empty() {
            bail!(Shape, "mean of an empty tensor");
        }
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(&[a])?;
        let s = self.value(a).data().iter().sum::<f64>();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean squared difference.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let s = self.square(d)?;
        self.mean(s)
    }

    /// Mean absolute difference.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let s = self.abs(d)?;
        self.mean(s)
    }

    /// Sum of mean absolute and mean squared differences.
    pub fn l1_l2(&mut self, a: Var, b: Var) -> Result<Var> {
        let l1 = self.l1(a, b)?;
        let l2 = self.mse(a, b)?;
        self.add(l1, l2)
    }

    /// Gradients of scalar `loss` with respect to every node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        self.check(&[loss])?;
        if self.value(loss).len() != 1 {
            bail!(Shape, "loss must be a scalar, got shape {:?}", self.value(loss).shape());
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            for p in node.op.parents() {
                if p.0 >= i {
                    bail!(Structure, "node {i} depends on later node {}", p.0);
                }
            }
            self.backprop(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Backward sweep from `loss`, summing parameter gradients into `params`.
    pub fn backward(&self, loss: Var, params: &mut Params) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let (Op::Param(id), Some(g)) = (&node.op, grads.grads[i].as_ref()) {
                if !g.is_finite() {
                    bail!(Numeric, "non-finite gradient for {}", params.name(*id));
                }
                params.grad_mut(*id).add_assign(g);
            }
        }
        Ok(())
    }

    fn backprop(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let acc = |grads: &mut [Option<Tensor>], v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        let gd = g.data();
        match self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { w, x } => {
                let (o, inn) = self.shape2(w)?;
                let (_, t) = self.shape2(x)?;
                let mut dw = vec![0.0; o * inn];
                gemm(o, t, inn, gd, false, self.value(x).data(), true, &mut dw, false);
                let mut dx = vec![0.0; inn * t];
                gemm(inn, o, t, self.value(w).data(), true, gd, false, &mut dx, false);
                acc(grads, w, Tensor::new(self.value(w).shape().to_vec(), dw)?);
                acc(grads, x, Tensor::new(self.value(x).shape().to_vec(), dx)?);
            }
            Op::AddBias { x, b } => {
                let (_, t) = self.shape2(x)?;
                let db: Vec<f64> = gd.chunks(t.max(1)).map(|r| r.iter().sum()).collect();
                acc(grads, x, g.clone());
                acc(grads, b, Tensor::new(self.value(b).shape().to_vec(), db)?);
            }
            Op::Conv1d { x, w, geo } => {
                let (c_in, t_in) = self.shape2(x)?;
                let ws = self.value(w).shape();
                let (c_out, k) = (ws[0], ws[2]);
                let t_out = g.cols();
                let col = im2col(self.value(x).data(), c_in, t_in, k, geo, t_out);
                let mut dw = vec![0.0; c_out * c_in * k];
                gemm(c_out, t_out, c_in * k, gd, false, &col, true, &mut dw, false);
                let mut dcol = vec![0.0; c_in * k * t_out];
                gemm(c_in * k, c_out, t_out, self.value(w).data(), true, gd, false, &mut dcol, false);
                let mut dx = vec![0.0; c_in * t_in];
                col2im(&dcol, c_in, t_in, k, geo, t_out, &mut dx);
                acc(grads, w, Tensor::new(ws.to_vec(), dw)?);
                acc(grads, x, Tensor::new(self.value(x).shape().to_vec(), dx)?);
            }
            Op::ConvTranspose1d { x, w, stride, padding } => {
                let (c_in, t_in) = self.shape2(x)?;
                let ws = self.value(w).shape();
                let (c_out, k) = (ws[1], ws[2]);
                let t_out = g.cols();
                let mut dcols = vec![0.0; c_out * k * t_in];
                for co in 0..c_out {
                    for kk in 0..k {
                        let row = &mut dcols[(co * k + kk) * t_in..(co * k + kk + 1) * t_in];
                        for (t, slot) in row.iter_mut().enumerate() {
                            let dst = (t * stride + kk) as isize - padding as isize;
                            if dst >= 0 && (dst as usize) < t_out {
                                *slot = gd[co * t_out + dst as usize];
                            }
                        }
                    }
                }
                let mut dx = vec![0.0; c_in * t_in];
                gemm(c_in, c_out * k, t_in, self.value(w).data(), false, &dcols, false, &mut dx, false);
                let mut dw = vec![0.0; c_in * c_out * k];
                gemm(c_in, t_in, c_out * k, self.value(x).data(), false, &dcols, true, &mut dw, false);
                acc(grads, w, Tensor::new(ws.to_vec(), dw)?);
                acc(grads, x, Tensor::new(self.value(x).shape().to_vec(), dx)?);
            }
            Op::Add(a, b) => {
                acc(grads, a, g.clone());
                acc(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, a, g.clone());
                acc(grads, b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let da = gd.iter().zip(vb.data()).map(|(g, y)| g * y).collect();
                let db = gd.iter().zip(va.data()).map(|(g, x)| g * x).collect();
                acc(grads, a, Tensor::new(va.shape().to_vec(), da)?);
                acc(grads, b, Tensor::new(vb.shape().to_vec(), db)?);
            }
            Op::Scale(a, s) => acc(grads, a, g.map(|v| v * s)),
            Op::Act(a, kind) => {
                let x = self.value(a);
                let d = gd.iter().zip(x.data()).map(|(g, &x)| g * kind.derivative(x)).collect();
                acc(grads, a, Tensor::new(x.shape().to_vec(), d)?);
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(x);
                let d = gd.iter().zip(xv.data()).map(|(g, &v)| if v > lo && v < hi { *g } else { 0.0 }).collect();
                acc(grads, x, Tensor::new(xv.shape().to_vec(), d)?);
            }
            Op::ConcatRows(a, b) => {
                let na = self.value(a).len();
                acc(grads, a, Tensor::new(self.value(a).shape().to_vec(), gd[..na].to_vec())?);
                acc(grads, b, Tensor::new(self.value(b).shape().to_vec(), gd[na..].to_vec())?);
            }
            Op::RepeatCols(a, factor) => {
                let d: Vec<f64> = gd.chunks(factor).map(|c| c.iter().sum()).collect();
                acc(grads, a, Tensor::new(self.value(a).shape().to_vec(), d)?);
            }
            Op::Square(a) => {
                let x = self.value(a);
                let d = gd.iter().zip(x.data()).map(|(g, x)| 2.0 * g * x).collect();
                acc(grads, a, Tensor::new(x.shape().to_vec(), d)?);
            }
            Op::Abs(a) => {
                let x = self.value(a);
                let d = gd.iter().zip(x.data()).map(|(g, x)| g * x.signum() * f64::from(*x != 0.0)).collect();
                acc(grads, a, Tensor::new(x.shape().to_vec(), d)?);
            }
            Op::Mean(a) => {
                let n = self.value(a).len() as f64;
                acc(grads, a, Tensor::full(self.value(a).shape(), gd[0] / n));
            }
            Op::Sum(a) => acc(grads, a, Tensor::full(self.value(a).shape(), gd[0])),
        }
        Ok(())
    }
}
