//! Operation tape for reverse-mode differentiation.
//!
//! Every builder method evaluates its operation eagerly, appends a node and
//! returns a [`Var`] handle. Because a node can only reference handles that
//! already exist, the tape is in topological order by construction and the
//! backward pass is a single reverse sweep.

use std::fmt;

use super::kernels::{self, ConvGeom};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Kinds of recorded operations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Input,
    Param,
    Conv2d,
    ConvTranspose2d,
    Matmul,
    AddBias,
    Prelu,
    Add,
    Scale,
    Sum,
    Mse,
    AppendChannels,
    Reshape,
    Truncate,
    ZeroExtend,
    PowerNormalize,
    ComplexAffine,
    SelectRows,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv2d { x: Var, w: Var, geom: ConvGeom },
    ConvTranspose2d { x: Var, w: Var, geom: ConvGeom },
    Matmul { a: Var, b: Var },
    AddBias { x: Var, b: Var },
    Prelu { x: Var, slope: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, alpha: f64 },
    Sum { x: Var },
    Mse { a: Var, b: Var },
    AppendChannels { x: Var },
    Reshape { x: Var },
    Truncate { x: Var },
    ZeroExtend { x: Var },
    PowerNormalize { x: Var, p_max: f64 },
    ComplexAffine { x: Var, gains: Vec<(f64, f64)> },
    SelectRows { x: Var, rows: Vec<usize> },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Param(_) => OpKind::Param,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::ConvTranspose2d { .. } => OpKind::ConvTranspose2d,
            Op::Matmul { .. } => OpKind::Matmul,
            Op::AddBias { .. } => OpKind::AddBias,
            Op::Prelu { .. } => OpKind::Prelu,
            Op::Add { .. } => OpKind::Add,
            Op::Scale { .. } => OpKind::Scale,
            Op::Sum { .. } => OpKind::Sum,
            Op::Mse { .. } => OpKind::Mse,
            Op::AppendChannels { .. } => OpKind::AppendChannels,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Truncate { .. } => OpKind::Truncate,
            Op::ZeroExtend { .. } => OpKind::ZeroExtend,
            Op::PowerNormalize { .. } => OpKind::PowerNormalize,
            Op::ComplexAffine { .. } => OpKind::ComplexAffine,
            Op::SelectRows { .. } => OpKind::SelectRows,
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one scalar with respect to every node of a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `var`, or `None` if `var` does not reach
    /// the differentiated scalar.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<OpKind>,
}

fn add_into(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .for_each(|(a, b)| *a += b),
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Test fixture: corrupts the input gradient of every `kind` operation
    /// so that gradient checks have a known-bad negative control.
    #[doc(hidden)]
    pub fn inject_gradient_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant (non-parameter) leaf.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// Records a leaf bound to parameter `id`; its gradient lands in the
    /// store on [`Tape::backward`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    fn conv_geom(&self, x: Var, w: Var, stride: usize, pad: usize, transpose: bool) -> Result<ConvGeom> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::dim(format!("conv expects 4-D input and kernel, got {xs:?} and {ws:?}")));
        }
        if ws[2] != ws[3] {
            return Err(Error::dim(format!("conv kernel must be square, got {ws:?}")));
        }
        if stride == 0 {
            return Err(Error::usage("conv stride must be at least 1"));
        }
        let k = ws[2];
        if !transpose {
            if xs[1] != ws[1] {
                return Err(Error::dim(format!("conv input has {} channels, kernel expects {}", xs[1], ws[1])));
            }
            if k > xs[2] + 2 * pad || k > xs[3] + 2 * pad {
                return Err(Error::dim(format!("kernel {k} larger than padded input {xs:?}")));
            }
            Ok(ConvGeom {
                batch: xs[0],
                in_ch: xs[1],
                out_ch: ws[0],
                in_h: xs[2],
                in_w: xs[3],
                k,
                stride,
                pad,
            })
        } else {
            if xs[1] != ws[0] {
                return Err(Error::dim(format!(
                    "transposed conv input has {} channels, kernel expects {}",
                    xs[1], ws[0]
                )));
            }
            let out = |n: usize| ((n - 1) * stride + k).checked_sub(2 * pad).filter(|&o| o > 0);
            let (Some(oh), Some(ow)) = (out(xs[2]), out(xs[3])) else {
                return Err(Error::dim(format!("padding {pad} too large for transposed conv of {xs:?}")));
            };
            Ok(ConvGeom {
                batch: xs[0],
                in_ch: ws[1],
                out_ch: ws[0],
                in_h: oh,
                in_w: ow,
                k,
                stride,
                pad,
            })
        }
    }

    /// Cross-correlation of `x` [B,C,H,W] with kernel `w` [F,C,k,k].
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = self.conv_geom(x, w, stride, pad, false)?;
        let out = kernels::conv2d_forward(&geom, self.value(x).data(), self.value(w).data());
        let shape = vec![geom.batch, geom.out_ch, geom.out_h(), geom.out_w()];
        Ok(self.push(Tensor::new(shape, out)?, Op::Conv2d { x, w, geom }))
    }

    /// Transposed convolution of `x` [B,F,H,W] with kernel `w` [F,C,k,k],
    /// the input-adjoint of [`Tape::conv2d`] with the same kernel. Output
    /// spatial size is `(H-1)*stride - 2*pad + k`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = self.conv_geom(x, w, stride, pad, true)?;
        let out = kernels::conv2d_input_adjoint(&geom, self.value(x).data(), self.value(w).data());
        let shape = vec![geom.batch, geom.in_ch, geom.in_h, geom.in_w];
        Ok(self.push(Tensor::new(shape, out)?, Op::ConvTranspose2d { x, w, geom }))
    }

    /// Matrix product of `a` [M,K] and `b` [K,N].
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul of {sa:?} by {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, 0.0, &mut out);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::Matmul { a, b }))
    }

    /// Adds `b` [C] along axis 1 of `x` [B,C,...].
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x);
        let bs = self.shape(b);
        if xs.len() < 2 || bs.len() != 1 || bs[0] != xs[1] {
            return Err(Error::dim(format!("bias {bs:?} does not fit {xs:?}")));
        }
        let channels = xs[1];
        let inner: usize = xs[2..].iter().product();
        let bias = self.value(b).data().to_vec();
        let mut out = self.value(x).clone();
        for (i, chunk) in out.data_mut().chunks_mut(inner).enumerate() {
            let bv = bias[i % channels];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
        Ok(self.push(out, Op::AddBias { x, b }))
    }

    /// Affine map `x w + b` for `x` [B,D_in], `w` [D_in,D_out], `b` [D_out].
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    /// Parametric ReLU with a single learnable slope `slope` [1].
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        if self.value(slope).len() != 1 {
            return Err(Error::dim("prelu slope must be a single value"));
        }
        let s = self.value(slope).item();
        let out = self.value(x).map(|v| if v >= 0.0 { v } else { s * v });
        Ok(self.push(out, Op::Prelu { x, slope }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.value(a).ensure_shape(self.value(b), "add")?;
        let mut out = self.value(a).clone();
        out.data_mut()
            .iter_mut()
            .zip(self.value(b).data())
            .for_each(|(x, y)| *x += y);
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Var {
        let out = self.value(x).map(|v| alpha * v);
        self.push(out, Op::Scale { x, alpha })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.value(a).ensure_shape(self.value(b), "mse")?;
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let n = va.len() as f64;
        let s: f64 = va.iter().zip(vb).map(|(x, y)| (x - y) * (x - y)).sum();
        Ok(self.push(Tensor::scalar(s / n), Op::Mse { a, b }))
    }

    /// Appends constant feature planes to `x` [B,C,H,W]; `values[i]` fills
    /// the whole of extra channel `i`.
    pub fn append_channels(&mut self, x: Var, values: &[f64]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(Error::dim(format!("append_channels expects 4-D input, got {xs:?}")));
        }
        let plane = xs[2] * xs[3];
        let per_item = xs[1] * plane;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(xs[0] * (xs[1] + values.len()) * plane);
        for b in 0..xs[0] {
            out.extend_from_slice(&src[b * per_item..(b + 1) * per_item]);
            for &v in values {
                out.extend(std::iter::repeat_n(v, plane));
            }
        }
        let shape = vec![xs[0], xs[1] + values.len(), xs[2], xs[3]];
        Ok(self.push(Tensor::new(shape, out)?, Op::AppendChannels { x }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape { x }))
    }

    /// Keeps the first `keep` columns of `x` [B,M].
    pub fn truncate(&mut self, x: Var, keep: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || keep == 0 || keep > xs[1] {
            return Err(Error::dim(format!("cannot keep {keep} columns of {xs:?}")));
        }
        let out: Vec<f64> = self
            .value(x)
            .data()
            .chunks(xs[1])
            .flat_map(|row| row[..keep].iter().copied())
            .collect();
        Ok(self.push(Tensor::new(vec![xs[0], keep], out)?, Op::Truncate { x }))
    }

    /// Pads `x` [B,K] with zero columns up to [B,total].
    pub fn zero_extend(&mut self, x: Var, total: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || total < xs[1] {
            return Err(Error::dim(format!("cannot extend {xs:?} to {total} columns")));
        }
        let mut out = vec![0.0; xs[0] * total];
        for (dst, src) in out.chunks_mut(total).zip(self.value(x).data().chunks(xs[1])) {
            dst[..xs[1]].copy_from_slice(src);
        }
        Ok(self.push(Tensor::new(vec![xs[0], total], out)?, Op::ZeroExtend { x }))
    }

    /// Scales every row of `x` [B,2K] (K interleaved complex symbols) so
    /// that its mean symbol power equals `p_max`.
    pub fn power_normalize(&mut self, x: Var, p_max: f64) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || !xs[1].is_multiple_of(2) {
            return Err(Error::dim(format!("power_normalize expects [B, 2K], got {xs:?}")));
        }
        let k = (xs[1] / 2) as f64;
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(xs[1]) {
            let energy: f64 = row.iter().map(|v| v * v).sum();
            if energy == 0.0 {
                return Err(Error::Degenerate("cannot power-normalize an all-zero code".into()));
            }
            let c = (k * p_max / energy).sqrt();
            row.iter_mut().for_each(|v| *v *= c);
        }
        Ok(self.push(out, Op::PowerNormalize { x, p_max }))
    }

    /// Per-row complex affine map `y = g_b * x + offset` on interleaved
    /// symbols, with `gains[b]` = (re, im) and a constant `offset` of the
    /// same shape as `x`. The offset is not differentiated.
    pub fn complex_affine(&mut self, x: Var, gains: &[(f64, f64)], offset: Option<&Tensor>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || !xs[1].is_multiple_of(2) || gains.len() != xs[0] {
            return Err(Error::dim(format!(
                "complex_affine expects [B, 2K] with B gains, got {xs:?} and {} gains",
                gains.len()
            )));
        }
        if let Some(o) = offset {
            self.value(x).ensure_shape(o, "complex_affine offset")?;
        }
        let mut out = self.value(x).clone();
        for (row, &(gr, gi)) in out.data_mut().chunks_mut(xs[1]).zip(gains) {
            for pair in row.chunks_mut(2) {
                let (a, b) = (pair[0], pair[1]);
                pair[0] = gr * a - gi * b;
                pair[1] = gr * b + gi * a;
            }
        }
        if let Some(o) = offset {
            out.data_mut().iter_mut().zip(o.data()).for_each(|(v, n)| *v += n);
        }
        Ok(self.push(out, Op::ComplexAffine { x, gains: gains.to_vec() }))
    }

    /// Gathers slices of `x` along its leading axis, in the given order.
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if rows.is_empty() || rows.iter().any(|&r| r >= xs[0]) {
            return Err(Error::dim(format!("row selection {rows:?} out of range for {xs:?}")));
        }
        let inner: usize = xs[1..].iter().product();
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(rows.len() * inner);
        for &r in rows {
            out.extend_from_slice(&src[r * inner..(r + 1) * inner]);
        }
        let mut shape = xs;
        shape[0] = rows.len();
        Ok(self.push(Tensor::new(shape, out)?, Op::SelectRows { x, rows: rows.to_vec() }))
    }

    /// Reverse sweep from scalar `loss`.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::usage("backward on an empty tape"));
        }
        if loss.0 >= self.nodes.len() || self.value(loss).len() != 1 {
            return Err(Error::usage("backward needs a scalar recorded on this tape"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones(self.shape(loss)));
        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let mut contribs = self.backprop(node, &gy)?;
            if self.fault == Some(node.op.kind()) {
                if let Some((_, g)) = contribs.first_mut() {
                    g.data_mut().iter_mut().for_each(|v| *v *= 1.5);
                }
            }
            for (input, g) in contribs {
                add_into(&mut grads[input.0], g);
            }
            grads[idx] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    /// Reverse sweep from `loss`, accumulating into the gradient buffers of
    /// every parameter reached. Unreached parameters are left untouched.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        for (node, g) in self.nodes.iter().zip(&grads.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                store.accumulate_grad(*id, g)?;
            }
        }
        Ok(grads)
    }

    fn backprop(&self, node: &Node, gy: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let like = |v: Var, data: Vec<f64>| Tensor::new(self.shape(v).to_vec(), data);
        Ok(match &node.op {
            Op::Input | Op::Param(_) => Vec::new(),
            Op::Conv2d { x, w, geom } => {
                let gx = kernels::conv2d_input_adjoint(geom, gy.data(), self.value(*w).data());
                let gw = kernels::conv2d_kernel_grad(geom, self.value(*x).data(), gy.data());
                vec![(*x, like(*x, gx)?), (*w, like(*w, gw)?)]
            }
            Op::ConvTranspose2d { x, w, geom } => {
                let gx = kernels::conv2d_forward(geom, gy.data(), self.value(*w).data());
                let gw = kernels::conv2d_kernel_grad(geom, gy.data(), self.value(*x).data());
                vec![(*x, like(*x, gx)?), (*w, like(*w, gw)?)]
            }
            Op::Matmul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let mut ga = vec![0.0; m * k];
                kernels::gemm(m, n, k, gy.data(), false, self.value(*b).data(), true, 0.0, &mut ga);
                let mut gb = vec![0.0; k * n];
                kernels::gemm(k, m, n, self.value(*a).data(), true, gy.data(), false, 0.0, &mut gb);
                vec![(*a, like(*a, ga)?), (*b, like(*b, gb)?)]
            }
            Op::AddBias { x, b } => {
                let xs = self.shape(*x);
                let channels = xs[1];
                let inner: usize = xs[2..].iter().product();
                let mut gb = vec![0.0; channels];
                for (i, chunk) in gy.data().chunks(inner).enumerate() {
                    gb[i % channels] += chunk.iter().sum::<f64>();
                }
                vec![(*x, gy.clone()), (*b, like(*b, gb)?)]
            }
            Op::Prelu { x, slope } => {
                let s = self.value(*slope).item();
                let xv = self.value(*x).data();
                let mut gs = 0.0;
                let gx: Vec<f64> = xv
                    .iter()
                    .zip(gy.data())
                    .map(|(&v, &g)| {
                        if v >= 0.0 {
                            g
                        } else {
                            gs += g * v;
                            s * g
                        }
                    })
                    .collect();
                vec![(*x, like(*x, gx)?), (*slope, Tensor::scalar(gs))]
            }
            Op::Add { a, b } => vec![(*a, gy.clone()), (*b, gy.clone())],
            Op::Scale { x, alpha } => vec![(*x, gy.map(|g| alpha * g))],
            Op::Sum { x } => vec![(*x, Tensor::full(self.shape(*x), gy.item()))],
            Op::Mse { a, b } => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                let c = 2.0 * gy.item() / va.len() as f64;
                let ga: Vec<f64> = va.iter().zip(vb).map(|(x, y)| c * (x - y)).collect();
                let gb: Vec<f64> = ga.iter().map(|g| -g).collect();
                vec![(*a, like(*a, ga)?), (*b, like(*b, gb)?)]
            }
            Op::AppendChannels { x } => {
                let xs = self.shape(*x);
                let per_item = xs[1] * xs[2] * xs[3];
                let out_per_item = gy.len() / xs[0];
                let gx: Vec<f64> = gy
                    .data()
                    .chunks(out_per_item)
                    .flat_map(|c| c[..per_item].iter().copied())
                    .collect();
                vec![(*x, like(*x, gx)?)]
            }
            Op::Reshape { x } => vec![(*x, gy.clone().reshape(self.shape(*x))?)],
            Op::Truncate { x } => {
                let xs = self.shape(*x);
                let keep = gy.shape()[1];
                let mut gx = vec![0.0; xs[0] * xs[1]];
                for (dst, src) in gx.chunks_mut(xs[1]).zip(gy.data().chunks(keep)) {
                    dst[..keep].copy_from_slice(src);
                }
                vec![(*x, like(*x, gx)?)]
            }
            Op::ZeroExtend { x } => {
                let keep = self.shape(*x)[1];
                let total = gy.shape()[1];
                let gx: Vec<f64> = gy
                    .data()
                    .chunks(total)
                    .flat_map(|row| row[..keep].iter().copied())
                    .collect();
                vec![(*x, like(*x, gx)?)]
            }
            Op::PowerNormalize { x, p_max } => {
                let width = self.shape(*x)[1];
                let k = (width / 2) as f64;
                let mut gx = Vec::with_capacity(gy.len());
                for (z, g) in self.value(*x).data().chunks(width).zip(gy.data().chunks(width)) {
                    let energy: f64 = z.iter().map(|v| v * v).sum();
                    let norm = energy.sqrt();
                    let proj: f64 = z.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / energy;
                    let c = (k * p_max).sqrt() / norm;
                    gx.extend(z.iter().zip(g).map(|(zi, gi)| c * (gi - zi * proj)));
                }
                vec![(*x, like(*x, gx)?)]
            }
            Op::ComplexAffine { x, gains } => {
                let width = self.shape(*x)[1];
                let mut gx = gy.clone();
                for (row, &(hr, hi)) in gx.data_mut().chunks_mut(width).zip(gains) {
                    for pair in row.chunks_mut(2) {
                        let (a, b) = (pair[0], pair[1]);
                        pair[0] = hr * a + hi * b;
                        pair[1] = hr * b - hi * a;
                    }
                }
                vec![(*x, gx)]
            }
            Op::SelectRows { x, rows } => {
                let xs = self.shape(*x);
                let inner: usize = xs[1..].iter().product();
                let mut gx = vec![0.0; self.value(*x).len()];
                for (&r, g) in rows.iter().zip(gy.data().chunks(inner)) {
                    gx[r * inner..(r + 1) * inner]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(a, b)| *a += b);
                }
                vec![(*x, like(*x, gx)?)]
            }
        })
    }
}
