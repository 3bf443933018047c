//! Forward and backward kernels on flat buffers.

use super::{Result, TensorError};
use crate::math;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

/// Op identifiers accepted by [`Graph::forward_op`](super::Graph::forward_op).
///
/// Ops that take attributes use fixed defaults when invoked by name:
/// reductions run over every axis, `concat`/`softmax`/`log_softmax` over
/// axis 0. The typed methods on [`Graph`](super::Graph) expose the attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
    Conv2d,
    Relu,
    Exp,
    Sqrt,
    Log,
    Softplus,
    Mean,
    Sum,
    Concat,
    Softmax,
    LogSoftmax,
    Transpose,
    AvgPool2,
    Upsample2,
}

impl OpKind {
    pub const ALL: [OpKind; 19] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::MatMul,
        OpKind::Conv2d,
        OpKind::Relu,
        OpKind::Exp,
        OpKind::Sqrt,
        OpKind::Log,
        OpKind::Softplus,
        OpKind::Mean,
        OpKind::Sum,
        OpKind::Concat,
        OpKind::Softmax,
        OpKind::LogSoftmax,
        OpKind::Transpose,
        OpKind::AvgPool2,
        OpKind::Upsample2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::MatMul => "matmul",
            OpKind::Conv2d => "conv2d",
            OpKind::Relu => "relu",
            OpKind::Exp => "exp",
            OpKind::Sqrt => "sqrt",
            OpKind::Log => "log",
            OpKind::Softplus => "softplus",
            OpKind::Mean => "mean",
            OpKind::Sum => "sum",
            OpKind::Concat => "concat",
            OpKind::Softmax => "softmax",
            OpKind::LogSoftmax => "log_softmax",
            OpKind::Transpose => "transpose",
            OpKind::AvgPool2 => "avg_pool2",
            OpKind::Upsample2 => "upsample2",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == name)
            .ok_or_else(|| TensorError::UnknownOp(name.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryKind {
    pub(crate) fn name(self) -> &'static str {
        match self {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        }
    }

    #[inline]
    pub(crate) fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryKind::Add => a + b,
            BinaryKind::Sub => a - b,
            BinaryKind::Mul => a * b,
            BinaryKind::Div => a / b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum UnaryKind {
    Relu,
    Exp,
    Sqrt,
    Log,
    Softplus,
}

impl UnaryKind {
    pub(crate) fn name(self) -> &'static str {
        match self {
            UnaryKind::Relu => "relu",
            UnaryKind::Exp => "exp",
            UnaryKind::Sqrt => "sqrt",
            UnaryKind::Log => "log",
            UnaryKind::Softplus => "softplus",
        }
    }

    #[inline]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            UnaryKind::Relu => x.max(0.0),
            UnaryKind::Exp => math::exp(x),
            UnaryKind::Sqrt => math::sqrt(x),
            UnaryKind::Log => math::ln(x),
            UnaryKind::Softplus => math::softplus(x),
        }
    }

    /// dy/dx given input `x` and output `y`.
    #[inline]
    pub(crate) fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryKind::Exp => y,
            UnaryKind::Sqrt => 0.5 / y,
            UnaryKind::Log => 1.0 / x,
            UnaryKind::Softplus => math::sigmoid(x),
        }
    }
}

/// How the smaller operand of a binary op is indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Operand {
    Full,
    Scalar,
    /// Per-channel: flat index `i` reads element `i / inner`.
    Channel {
        inner: usize,
    },
}

impl Operand {
    #[inline]
    pub(crate) fn index(self, i: usize) -> usize {
        match self {
            Operand::Full => i,
            Operand::Scalar => 0,
            Operand::Channel { inner } => i / inner,
        }
    }
}

/// Resolves the broadcast of `a` against `b`: returns the output shape and
/// the indexing rule for each side.
pub(crate) fn broadcast(
    op: &'static str,
    a: &[usize],
    b: &[usize],
) -> Result<(Vec<usize>, Operand, Operand)> {
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    if a == b {
        return Ok((a.to_vec(), Operand::Full, Operand::Full));
    }
    if nb == 1 {
        return Ok((a.to_vec(), Operand::Full, Operand::Scalar));
    }
    if na == 1 {
        return Ok((b.to_vec(), Operand::Scalar, Operand::Full));
    }
    if b.len() == 1 && a.len() > 1 && a[0] == b[0] {
        return Ok((
            a.to_vec(),
            Operand::Full,
            Operand::Channel { inner: na / b[0] },
        ));
    }
    if a.len() == 1 && b.len() > 1 && b[0] == a[0] {
        return Ok((
            b.to_vec(),
            Operand::Channel { inner: nb / a[0] },
            Operand::Full,
        ));
    }
    Err(TensorError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    })
}

/// `(outer, len, inner)` split of `shape` around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Output shape and flat input→output index map of a reduction over `axes`.
pub(crate) fn reduction_map(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut keep = vec![true; shape.len()];
    for &a in axes {
        keep[a] = false;
    }
    let mut out_shape: Vec<usize> = shape
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&d, _)| d)
        .collect();
    // Output strides for kept axes, zero for reduced ones.
    let mut out_strides = vec![0usize; shape.len()];
    let mut stride = 1;
    for ax in (0..shape.len()).rev() {
        if keep[ax] {
            out_strides[ax] = stride;
            stride *= shape[ax];
        }
    }
    let n: usize = shape.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut index = vec![0usize; shape.len()];
    for _ in 0..n {
        map.push(index.iter().zip(&out_strides).map(|(i, s)| i * s).sum());
        for ax in (0..shape.len()).rev() {
            index[ax] += 1;
            if index[ax] < shape[ax] {
                break;
            }
            index[ax] = 0;
        }
    }
    if out_shape.is_empty() {
        out_shape.push(1);
    }
    (out_shape, map)
}

pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a^T · g` for `a: m×k`, `g: m×n` → `k×n`.
pub(crate) fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

/// `g · b^T` for `g: m×n`, `b: k×n` → `m×k`.
pub(crate) fn matmul_nt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = dot(grow, brow);
        }
    }
    out
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Valid `(dst_start, src_start, len)` for a 1-D shift by `offset` ∈ {-1,0,1}
/// under zero padding of width 1.
#[inline]
fn tap_range(extent: usize, offset: isize) -> (usize, usize, usize) {
    match offset {
        -1 => (1, 0, extent - 1),
        0 => (0, 0, extent),
        _ => (0, 1, extent - 1),
    }
}

/// 3×3 convolution, stride 1, zero padding 1.
/// `input: cin×h×w`, `weight: cout×cin×3×3`, `bias: cout`.
pub(crate) fn conv2d_forward(
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; cout * plane];
    for co in 0..cout {
        let oplane = &mut out[co * plane..(co + 1) * plane];
        oplane.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..cin {
            let iplane = &input[ci * plane..(ci + 1) * plane];
            for ky in 0..3 {
                let (y0, sy0, ny) = tap_range(h, ky as isize - 1);
                for kx in 0..3 {
                    let wv = weight[((co * cin + ci) * 3 + ky) * 3 + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (x0, sx0, nx) = tap_range(w, kx as isize - 1);
                    for r in 0..ny {
                        let orow = &mut oplane[(y0 + r) * w + x0..(y0 + r) * w + x0 + nx];
                        let irow = &iplane[(sy0 + r) * w + sx0..(sy0 + r) * w + sx0 + nx];
                        for (o, &i) in orow.iter_mut().zip(irow) {
                            *o += wv * i;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`conv2d_forward`] w.r.t. input, weight and bias.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    grad_out: &[f64],
    input: &[f64],
    weight: &[f64],
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    need_input: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let plane = h * w;
    let mut gin = need_input.then(|| vec![0.0; cin * plane]);
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; cout];
    for co in 0..cout {
        let gplane = &grad_out[co * plane..(co + 1) * plane];
        gb[co] = gplane.iter().sum();
        for ci in 0..cin {
            let iplane = &input[ci * plane..(ci + 1) * plane];
            for ky in 0..3 {
                let (y0, sy0, ny) = tap_range(h, ky as isize - 1);
                for kx in 0..3 {
                    let widx = ((co * cin + ci) * 3 + ky) * 3 + kx;
                    let (x0, sx0, nx) = tap_range(w, kx as isize - 1);
                    let mut acc = 0.0;
                    for r in 0..ny {
                        let grow = &gplane[(y0 + r) * w + x0..(y0 + r) * w + x0 + nx];
                        let irow = &iplane[(sy0 + r) * w + sx0..(sy0 + r) * w + sx0 + nx];
                        acc += dot(grow, irow);
                    }
                    gw[widx] += acc;
                    if let Some(gin) = gin.as_mut() {
                        let wv = weight[widx];
                        if wv == 0.0 {
                            continue;
                        }
                        let gplane_in = &mut gin[ci * plane..(ci + 1) * plane];
                        for r in 0..ny {
                            let grow = &gplane[(y0 + r) * w + x0..(y0 + r) * w + x0 + nx];
                            let irow =
                                &mut gplane_in[(sy0 + r) * w + sx0..(sy0 + r) * w + sx0 + nx];
                            for (i, &g) in irow.iter_mut().zip(grow) {
                                *i += wv * g;
                            }
                        }
                    }
                }
            }
        }
    }
    (gin, gw, gb)
}

/// 2×2 average pooling with stride 2 on `c×h×w`.
pub(crate) fn avg_pool2_forward(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let base = ch * h * w;
                let s = x[base + 2 * y * w + 2 * xx]
                    + x[base + 2 * y * w + 2 * xx + 1]
                    + x[base + (2 * y + 1) * w + 2 * xx]
                    + x[base + (2 * y + 1) * w + 2 * xx + 1];
                out[(ch * oh + y) * ow + xx] = 0.25 * s;
            }
        }
    }
    out
}

pub(crate) fn avg_pool2_backward(g: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut gin = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let gv = 0.25 * g[(ch * oh + y) * ow + xx];
                let base = ch * h * w;
                gin[base + 2 * y * w + 2 * xx] += gv;
                gin[base + 2 * y * w + 2 * xx + 1] += gv;
                gin[base + (2 * y + 1) * w + 2 * xx] += gv;
                gin[base + (2 * y + 1) * w + 2 * xx + 1] += gv;
            }
        }
    }
    gin
}

/// Source taps `(lo, hi, weight_hi)` for output coordinate `o` of a ×2
/// bilinear upsample (half-pixel centres, edge clamped).
#[inline]
fn upsample_taps(o: usize, n: usize) -> (usize, usize, f64) {
    let i = o / 2;
    if o % 2 == 0 {
        // source coordinate i - 0.25
        if i == 0 {
            (0, 0, 0.0)
        } else {
            (i - 1, i, 0.75)
        }
    } else {
        // source coordinate i + 0.25
        if i + 1 >= n {
            (i, i, 0.0)
        } else {
            (i, i + 1, 0.25)
        }
    }
}

/// Bilinear ×2 upsample on `c×h×w` → `c×2h×2w`.
pub(crate) fn upsample2_forward(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        for y in 0..oh {
            let (y0, y1, fy) = upsample_taps(y, h);
            for xx in 0..ow {
                let (x0, x1, fx) = upsample_taps(xx, w);
                let top = (1.0 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1];
                let bot = (1.0 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1];
                out[(ch * oh + y) * ow + xx] = (1.0 - fy) * top + fy * bot;
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward(g: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut gin = vec![0.0; c * h * w];
    for ch in 0..c {
        let dst = &mut gin[ch * h * w..(ch + 1) * h * w];
        for y in 0..oh {
            let (y0, y1, fy) = upsample_taps(y, h);
            for xx in 0..ow {
                let (x0, x1, fx) = upsample_taps(xx, w);
                let gv = g[(ch * oh + y) * ow + xx];
                dst[y0 * w + x0] += (1.0 - fy) * (1.0 - fx) * gv;
                dst[y0 * w + x1] += (1.0 - fy) * fx * gv;
                dst[y1 * w + x0] += fy * (1.0 - fx) * gv;
                dst[y1 * w + x1] += fy * fx * gv;
            }
        }
    }
    gin
}

/// Softmax (or log-softmax) along the middle extent of an `outer×len×inner`
/// view, stabilized by max subtraction.
pub(crate) fn softmax_forward(
    x: &[f64],
    outer: usize,
    len: usize,
    inner: usize,
    log: bool,
) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = (0..len).map(|k| math::exp(x[at(k)] - max)).sum();
            if log {
                let lse = max + math::ln(denom);
                for k in 0..len {
                    out[at(k)] = x[at(k)] - lse;
                }
            } else {
                for k in 0..len {
                    out[at(k)] = math::exp(x[at(k)] - max) / denom;
                }
            }
        }
    }
    out
}

/// Backward of [`softmax_forward`] given the forward output `y`.
pub(crate) fn softmax_backward(
    g: &[f64],
    y: &[f64],
    outer: usize,
    len: usize,
    inner: usize,
    log: bool,
) -> Vec<f64> {
    let mut gin = vec![0.0; g.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            if log {
                // y = log p; dx = g - p * sum(g)
                let gsum: f64 = (0..len).map(|k| g[at(k)]).sum();
                for k in 0..len {
                    gin[at(k)] = g[at(k)] - math::exp(y[at(k)]) * gsum;
                }
            } else {
                let s: f64 = (0..len).map(|k| g[at(k)] * y[at(k)]).sum();
                for k in 0..len {
                    gin[at(k)] = y[at(k)] * (g[at(k)] - s);
                }
            }
        }
    }
    gin
}
