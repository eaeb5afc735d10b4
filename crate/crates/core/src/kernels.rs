//! Forward kernels and the backward rules that undo them.
//!
//! Convolution is lowered to im2col + GEMM. Parallel loops only split work
//! across independent output rows, and every accumulation runs in a fixed
//! left-to-right order, so results are bitwise reproducible.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Data, Element, Tensor};

/// Below this many multiply-adds a GEMM stays on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

macro_rules! unary {
    ($x:expr, |$v:ident| $body:expr) => {
        match $x.data() {
            Data::F32($v) => Data::F32($body),
            Data::F64($v) => Data::F64($body),
        }
    };
}

macro_rules! binary {
    ($what:expr, $a:expr, $b:expr, |$x:ident, $y:ident| $body:expr) => {
        match ($a.data(), $b.data()) {
            (Data::F32($x), Data::F32($y)) => Data::F32($body),
            (Data::F64($x), Data::F64($y)) => Data::F64($body),
            _ => {
                return Err(Error::DtypeMismatch(format!(
                    "{}: {} vs {}",
                    $what,
                    $a.dtype().name(),
                    $b.dtype().name()
                )))
            }
        }
    };
}

macro_rules! ternary {
    ($what:expr, $a:expr, $b:expr, $c:expr, |$x:ident, $y:ident, $z:ident| $body:expr) => {
        match ($a.data(), $b.data(), $c.data()) {
            (Data::F32($x), Data::F32($y), Data::F32($z)) => Data::F32($body),
            (Data::F64($x), Data::F64($y), Data::F64($z)) => Data::F64($body),
            _ => return Err(Error::DtypeMismatch(format!("{}: mixed precisions", $what))),
        }
    };
}

/// `out[m,n] += a[m,k] · b[k,n]`, summing over `k` in ascending order.
fn gemm_into<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    if n == 0 {
        return;
    }
    let row = |(i, out_row): (usize, &mut [T])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (t, &av) in a_row.iter().enumerate() {
            // Skipping exact zeros leaves finite results bitwise unchanged.
            if av == T::zero() {
                continue;
            }
            let b_row = &b[t * n..(t + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD && m > 1 {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
}

fn transpose_raw<T: Element>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (&[m, k], &[k2, n]) = (a.dims(), b.dims()) else {
        return Err(Error::shape(format!(
            "matmul needs rank-2 operands, got {} and {}",
            a.shape(),
            b.shape()
        )));
    };
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul inner extents differ: {} x {}",
            a.shape(),
            b.shape()
        )));
    }
    let data = binary!("matmul", a, b, |x, y| {
        let mut out = vec![Default::default(); m * n];
        gemm_into(x, y, m, k, n, &mut out);
        out
    });
    Ok(Tensor::from_data(&[m, n], data))
}

pub fn transpose2(a: &Tensor) -> Result<Tensor> {
    let &[rows, cols] = a.dims() else {
        return Err(Error::shape(format!("transpose needs rank 2, got {}", a.shape())));
    };
    let data = unary!(a, |x| transpose_raw(x, rows, cols));
    Ok(Tensor::from_data(&[cols, rows], data))
}

/// Adds `bias[c]` along the last axis.
pub fn add_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let c = *x.dims().last().unwrap_or(&1);
    if bias.dims() != [c] {
        return Err(Error::shape(format!(
            "bias {} does not match last axis of {}",
            bias.shape(),
            x.shape()
        )));
    }
    let data = binary!("add_bias", x, bias, |v, b| {
        let mut out = v.clone();
        if c > 0 {
            for row in out.chunks_mut(c) {
                for (o, &bv) in row.iter_mut().zip(b.iter()) {
                    *o = *o + bv;
                }
            }
        }
        out
    });
    Ok(Tensor::from_data(x.dims(), data))
}

/// Column sums of `g` viewed as `[rows, c]` with `c` the last axis.
pub fn sum_to_last_axis(g: &Tensor) -> Tensor {
    let c = *g.dims().last().unwrap_or(&1);
    let data = unary!(g, |v| {
        let mut acc = vec![Default::default(); c];
        if c > 0 {
            for row in v.chunks(c) {
                for (a, &x) in acc.iter_mut().zip(row) {
                    *a = *a + x;
                }
            }
        }
        acc
    });
    Tensor::from_data(&[c], data)
}

fn relu_raw<T: Element>(v: &[T]) -> Vec<T> {
    v.iter().map(|&e| if e > T::zero() { e } else { T::zero() }).collect()
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = unary!(x, |v| relu_raw(v));
    Tensor::from_data(x.dims(), data)
}

fn relu_backward_raw<T: Element>(x: &[T], g: &[T]) -> Vec<T> {
    x.iter().zip(g).map(|(&e, &d)| if e > T::zero() { d } else { T::zero() }).collect()
}

/// `g · 1[x > 0]`; the gradient at exactly zero is zero.
pub fn relu_backward(x: &Tensor, g: &Tensor) -> Result<Tensor> {
    same_shape("relu_backward", x, g)?;
    let data = binary!("relu_backward", x, g, |xv, gv| relu_backward_raw(xv, gv));
    Ok(Tensor::from_data(x.dims(), data))
}

fn softmax_row<T: Element>(row: &[T], out: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum = sum + *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let &[_, c] = x.dims() else {
        return Err(Error::shape(format!("softmax_rows needs rank 2, got {}", x.shape())));
    };
    if c == 0 {
        return Err(Error::shape("softmax_rows needs at least one column"));
    }
    let data = unary!(x, |v| {
        let mut out = vec![Default::default(); v.len()];
        for (row, o) in v.chunks(c).zip(out.chunks_mut(c)) {
            softmax_row(row, o);
        }
        out
    });
    Ok(Tensor::from_data(x.dims(), data))
}

fn softmax_backward_raw<T: Element>(p: &[T], g: &[T], c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); p.len()];
    for ((pr, gr), o) in p.chunks(c).zip(g.chunks(c)).zip(out.chunks_mut(c)) {
        let dot = dot_raw(pr, gr);
        for ((o, &pi), &gi) in o.iter_mut().zip(pr).zip(gr) {
            *o = pi * (gi - dot);
        }
    }
    out
}

fn dot_raw<T: Element>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn sum_raw<T: Element>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc + x)
}

fn scale_raw<T: Element>(a: &[T], k: T) -> Vec<T> {
    a.iter().map(|&e| e * k).collect()
}

/// Given softmax output `p` and upstream `g`: `p ⊙ (g − Σ g·p)` per row.
pub fn softmax_backward(p: &Tensor, g: &Tensor) -> Result<Tensor> {
    same_shape("softmax_backward", p, g)?;
    let &[_, c] = p.dims() else {
        return Err(Error::shape("softmax_backward needs rank 2"));
    };
    let data = binary!("softmax_backward", p, g, |pv, gv| softmax_backward_raw(pv, gv, c));
    Ok(Tensor::from_data(p.dims(), data))
}

pub fn scale(x: &Tensor, alpha: f64) -> Tensor {
    let data = unary!(x, |v| scale_raw(v, Element::from_f64(alpha)));
    Tensor::from_data(x.dims(), data)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let data = binary!("add", a, b, |x, y| x.iter().zip(y).map(|(&p, &q)| p + q).collect());
    Ok(Tensor::from_data(a.dims(), data))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let data = binary!("mul", a, b, |x, y| x.iter().zip(y).map(|(&p, &q)| p * q).collect());
    Ok(Tensor::from_data(a.dims(), data))
}

/// Sum of all elements, accumulated left to right in the tensor's precision.
pub fn sum_all(x: &Tensor) -> Tensor {
    let data = unary!(x, |v| vec![sum_raw(v)]);
    Tensor::from_data(&[], data)
}

pub fn dot(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("dot", a, b)?;
    let data = binary!("dot", a, b, |x, y| vec![dot_raw(x, y)]);
    Ok(Tensor::from_data(&[], data))
}

/// Broadcasts a scalar gradient to a full tensor of `dims`.
pub(crate) fn fill_like(dims: &[usize], value: &Tensor) -> Tensor {
    let n = dims.iter().product();
    let data = unary!(value, |v| vec![v[0]; n]);
    Tensor::from_data(dims, data)
}

/// `grad · other` for a scalar `grad`.
pub(crate) fn scale_by_scalar(x: &Tensor, s: &Tensor) -> Result<Tensor> {
    let data = binary!("scale_by_scalar", x, s, |v, g| scale_raw(v, g[0]));
    Ok(Tensor::from_data(x.dims(), data))
}

fn momentum_raw<T: Element>(theta: &[T], v: &[T], g: &[T], lr: f64, m: f64) -> (Vec<T>, Vec<T>) {
    let (lr, m) = (T::from_f64(lr), T::from_f64(m));
    let v_new: Vec<T> = v.iter().zip(g).map(|(&v, &g)| m * v + g).collect();
    let theta_new = theta.iter().zip(&v_new).map(|(&t, &v)| t - lr * v).collect();
    (theta_new, v_new)
}

/// One heavy-ball step: `v ← m·v + g`, `θ ← θ − lr·v`. Returns `(θ, v)`.
pub fn momentum_update(theta: &Tensor, velocity: &Tensor, grad: &Tensor, lr: f64, momentum: f64) -> Result<(Tensor, Tensor)> {
    same_shape("momentum_update", theta, velocity)?;
    same_shape("momentum_update", theta, grad)?;
    let (t, v) = match (theta.data(), velocity.data(), grad.data()) {
        (Data::F32(t), Data::F32(v), Data::F32(g)) => {
            let (t, v) = momentum_raw(t, v, g, lr, momentum);
            (Data::F32(t), Data::F32(v))
        }
        (Data::F64(t), Data::F64(v), Data::F64(g)) => {
            let (t, v) = momentum_raw(t, v, g, lr, momentum);
            (Data::F64(t), Data::F64(v))
        }
        _ => return Err(Error::DtypeMismatch("momentum_update: mixed precisions".into())),
    };
    Ok((Tensor::from_data(theta.dims(), t), Tensor::from_data(theta.dims(), v)))
}

/// Probabilities are clamped to this floor before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

fn check_labels(probs: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let &[n, c] = probs.dims() else {
        return Err(Error::shape(format!("cross_entropy needs [N, C] probabilities, got {}", probs.shape())));
    };
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    Ok((n, c))
}

fn cross_entropy_raw<T: Element>(p: &[T], labels: &[usize], c: usize) -> T {
    let floor = T::from_f64(PROB_FLOOR);
    let total = labels
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &y)| acc + p[i * c + y].max(floor).ln());
    -total / T::from_f64(labels.len() as f64)
}

fn cross_entropy_backward_raw<T: Element>(p: &[T], labels: &[usize], c: usize, g: T) -> Vec<T> {
    let mut out = vec![T::zero(); p.len()];
    let floor = T::from_f64(PROB_FLOOR);
    let k = -g / T::from_f64(labels.len() as f64);
    for (i, &y) in labels.iter().enumerate() {
        let v = p[i * c + y];
        if v > floor {
            out[i * c + y] = k / v;
        }
    }
    out
}

fn softmax_cross_entropy_backward_raw<T: Element>(p: &[T], labels: &[usize], c: usize, g: T) -> Vec<T> {
    let k = g / T::from_f64(labels.len() as f64);
    let mut out = p.to_vec();
    for (i, &y) in labels.iter().enumerate() {
        out[i * c + y] = out[i * c + y] - T::one();
    }
    out.iter_mut().for_each(|v| *v = *v * k);
    out
}

/// Mean negative log-probability of the labelled class.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (n, c) = check_labels(probs, labels)?;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let data = unary!(probs, |p| vec![cross_entropy_raw(p, labels, c)]);
    Ok(Tensor::from_data(&[], data))
}

/// Gradient of [`cross_entropy`] with respect to the probabilities.
pub(crate) fn cross_entropy_backward(probs: &Tensor, labels: &[usize], g: &Tensor) -> Result<Tensor> {
    let (_, c) = check_labels(probs, labels)?;
    let data = binary!("cross_entropy_backward", probs, g, |p, gv| cross_entropy_backward_raw(p, labels, c, gv[0]));
    Ok(Tensor::from_data(probs.dims(), data))
}

/// Gradient of cross-entropy over a softmax, taken with respect to the
/// logits: `g · (p − onehot(y)) / N`.
pub(crate) fn softmax_cross_entropy_backward(
    probs: &Tensor,
    labels: &[usize],
    g: &Tensor,
) -> Result<Tensor> {
    let (_, c) = check_labels(probs, labels)?;
    let data = binary!("softmax_cross_entropy_backward", probs, g, |p, gv| {
        softmax_cross_entropy_backward_raw(p, labels, c, gv[0])
    });
    Ok(Tensor::from_data(probs.dims(), data))
}

fn same_shape(what: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!("{what}: {} vs {}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Output extent and (before, after) zero padding for SAME convolution
/// along one axis. The odd extra element goes after (bottom/right).
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize, usize) {
    let out = input.div_ceil(stride);
    let needed = (out.saturating_sub(1) * stride + kernel).saturating_sub(input);
    let before = needed / 2;
    (out, before, needed - before)
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
}

impl ConvGeom {
    fn new(input: &Tensor, kernel: &Tensor, stride: usize) -> Result<Self> {
        let &[n, h, w, cin] = input.dims() else {
            return Err(Error::shape(format!(
                "conv2d input must be [N,H,W,C], got {}",
                input.shape()
            )));
        };
        let &[kh, kw, kcin, cout] = kernel.dims() else {
            return Err(Error::shape(format!(
                "conv2d kernel must be [kh,kw,Cin,Cout], got {}",
                kernel.shape()
            )));
        };
        if kh == 0 || kw == 0 {
            return Err(Error::shape("conv2d kernel extents must be >= 1"));
        }
        if stride == 0 {
            return Err(Error::shape("conv2d stride must be >= 1"));
        }
        if kcin != cin {
            return Err(Error::ChannelMismatch {
                input: cin,
                kernel: kcin,
            });
        }
        let (oh, pad_top, _) = same_padding(h, kh, stride);
        let (ow, pad_left, _) = same_padding(w, kw, stride);
        Ok(ConvGeom {
            n,
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            stride,
            oh,
            ow,
            pad_top,
            pad_left,
        })
    }

    fn patch(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Input coordinate for output `o` and kernel tap `k`, if inside the image.
    fn source(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        (o * stride + k).checked_sub(pad).filter(|&i| i < extent)
    }

    /// Rows are output positions, columns follow the kernel's (ky, kx, ci) order.
    fn im2col<T: Element>(&self, sample: &[T], col: &mut [T]) {
        let k = self.patch();
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = &mut col[(oy * self.ow + ox) * k..][..k];
                for ky in 0..self.kh {
                    let iy = Self::source(oy, ky, self.stride, self.pad_top, self.h);
                    for kx in 0..self.kw {
                        let dst = &mut row[(ky * self.kw + kx) * self.cin..][..self.cin];
                        let ix = Self::source(ox, kx, self.stride, self.pad_left, self.w);
                        match (iy, ix) {
                            (Some(iy), Some(ix)) => dst
                                .copy_from_slice(&sample[(iy * self.w + ix) * self.cin..][..self.cin]),
                            _ => dst.fill(T::zero()),
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Element>(&self, col: &[T], sample: &mut [T]) {
        let k = self.patch();
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = &col[(oy * self.ow + ox) * k..][..k];
                for ky in 0..self.kh {
                    let Some(iy) = Self::source(oy, ky, self.stride, self.pad_top, self.h) else {
                        continue;
                    };
                    for kx in 0..self.kw {
                        let Some(ix) = Self::source(ox, kx, self.stride, self.pad_left, self.w)
                        else {
                            continue;
                        };
                        let src = &row[(ky * self.kw + kx) * self.cin..][..self.cin];
                        let dst = &mut sample[(iy * self.w + ix) * self.cin..][..self.cin];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
    }

    fn forward<T: Element>(&self, input: &[T], kernel: &[T], bias: &[T]) -> Vec<T> {
        let (p, k) = (self.positions(), self.patch());
        let mut out = vec![T::zero(); self.n * p * self.cout];
        if out.is_empty() {
            return out;
        }
        let sample_len = self.h * self.w * self.cin;
        let one = |(s, out_s): (usize, &mut [T])| {
            let mut col = vec![T::zero(); p * k];
            self.im2col(&input[s * sample_len..][..sample_len], &mut col);
            for row in out_s.chunks_mut(self.cout) {
                row.copy_from_slice(bias);
            }
            gemm_into(&col, kernel, p, k, self.cout, out_s);
        };
        out.par_chunks_mut(p * self.cout).enumerate().for_each(one);
        out
    }

    fn backward<T: Element>(
        &self,
        input: &[T],
        kernel: &[T],
        grad: &[T],
        need_input: bool,
    ) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
        let (p, k) = (self.positions(), self.patch());
        let sample_len = self.h * self.w * self.cin;
        let mut d_kernel = vec![T::zero(); k * self.cout];
        let mut d_bias = vec![T::zero(); self.cout];
        let mut d_input = need_input.then(|| vec![T::zero(); self.n * sample_len]);
        let kernel_t = transpose_raw(kernel, k, self.cout);
        let mut col = vec![T::zero(); p * k];
        let mut d_col = vec![T::zero(); p * k];
        for s in 0..self.n {
            let g = &grad[s * p * self.cout..][..p * self.cout];
            if self.cout > 0 {
                for row in g.chunks(self.cout) {
                    for (b, &v) in d_bias.iter_mut().zip(row) {
                        *b = *b + v;
                    }
                }
            }
            self.im2col(&input[s * sample_len..][..sample_len], &mut col);
            let col_t = transpose_raw(&col, p, k);
            gemm_into(&col_t, g, k, p, self.cout, &mut d_kernel);
            if let Some(dx) = d_input.as_mut() {
                d_col.fill(T::zero());
                gemm_into(g, &kernel_t, p, self.cout, k, &mut d_col);
                self.col2im(&d_col, &mut dx[s * sample_len..][..sample_len]);
            }
        }
        (d_input, d_kernel, d_bias)
    }
}

/// SAME-padded 2-D convolution over NHWC input with a `[kh,kw,Cin,Cout]` kernel.
pub fn conv2d_same(input: &Tensor, kernel: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor> {
    let g = ConvGeom::new(input, kernel, stride)?;
    if bias.dims() != [g.cout] {
        return Err(Error::shape(format!(
            "conv2d bias must be [{}], got {}",
            g.cout,
            bias.shape()
        )));
    }
    let data = ternary!("conv2d_same", input, kernel, bias, |x, k, b| g.forward(x, k, b));
    Ok(Tensor::from_data(&[g.n, g.oh, g.ow, g.cout], data))
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub kernel: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_same_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    need_input: bool,
) -> Result<ConvGrads> {
    let g = ConvGeom::new(input, kernel, stride)?;
    if grad_out.dims() != [g.n, g.oh, g.ow, g.cout] {
        return Err(Error::shape(format!(
            "conv2d gradient has shape {}",
            grad_out.shape()
        )));
    }
    macro_rules! run {
        ($x:expr, $k:expr, $d:expr, $wrap:path) => {{
            let (dx, dk, db) = g.backward($x, $k, $d, need_input);
            ConvGrads {
                input: dx.map(|v| Tensor::from_data(input.dims(), $wrap(v))),
                kernel: Tensor::from_data(kernel.dims(), $wrap(dk)),
                bias: Tensor::from_data(&[g.cout], $wrap(db)),
            }
        }};
    }
    Ok(match (input.data(), kernel.data(), grad_out.data()) {
        (Data::F32(x), Data::F32(k), Data::F32(d)) => run!(x, k, d, Data::F32),
        (Data::F64(x), Data::F64(k), Data::F64(d)) => run!(x, k, d, Data::F64),
        _ => return Err(Error::DtypeMismatch("conv2d_same_backward: mixed precisions".into())),
    })
}

/// 2x2 stride-2 max pooling output together with the flat input index each
/// output element was taken from.
#[derive(Debug, Clone)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

fn maxpool_raw<T: Element>(x: &[T], n: usize, h: usize, w: usize, c: usize) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut arg = Vec::with_capacity(out.capacity());
    for s in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let at = |dy: usize, dx: usize| ((s * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                    let mut best = at(0, 0);
                    // Row-major window order; strict comparison keeps the first maximum.
                    for idx in [at(0, 1), at(1, 0), at(1, 1)] {
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    arg.push(best);
                }
            }
        }
    }
    (out, arg)
}

pub fn maxpool2(input: &Tensor) -> Result<Pooled> {
    let &[n, h, w, c] = input.dims() else {
        return Err(Error::shape(format!("maxpool2 input must be [N,H,W,C], got {}", input.shape())));
    };
    if h < 2 || w < 2 {
        return Err(Error::SpatialTooSmall {
            height: h,
            width: w,
        });
    }
    let (data, argmax) = match input.data() {
        Data::F32(v) => {
            let (o, a) = maxpool_raw(v, n, h, w, c);
            (Data::F32(o), a)
        }
        Data::F64(v) => {
            let (o, a) = maxpool_raw(v, n, h, w, c);
            (Data::F64(o), a)
        }
    };
    Ok(Pooled {
        output: Tensor::from_data(&[n, h / 2, w / 2, c], data),
        argmax,
    })
}

/// Routes each output gradient to the input element recorded in `argmax`.
pub fn maxpool2_backward(input_dims: &[usize], argmax: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return Err(Error::shape("maxpool2 gradient does not match recorded windows"));
    }
    let n: usize = input_dims.iter().product();
    let data = unary!(grad_out, |g| {
        let mut dx = vec![Default::default(); n];
        for (&i, &gv) in argmax.iter().zip(g) {
            dx[i] = gv;
        }
        dx
    });
    Ok(Tensor::from_data(input_dims, data))
}
