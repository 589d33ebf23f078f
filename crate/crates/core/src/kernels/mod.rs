//! Numeric layer kernels.
//!
//! The functions at this level are the ones the runtime uses. They work on
//! whole rows (shifted multiply-accumulate over contiguous slices) and
//! parallelise across output feature maps. [`naive`] holds direct
//! per-element loops over the defining sums; those are the oracles the fast
//! path is tested against.
//!
//! All reductions accumulate in `f64` and round to `f32` once on output.
//! Parallel work is split by output map only, so every output element is
//! produced by the same sequence of operations regardless of thread count.

pub mod naive;

use rayon::prelude::*;

use crate::tensor::Tensor;

/// BatchNorm epsilon.
pub const BN_EPS: f32 = 1e-3;
/// ELU alpha.
pub const ELU_ALPHA: f32 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{op}: {detail}")]
pub struct KernelError {
    pub op: &'static str,
    pub detail: String,
}

pub(crate) fn mismatch(op: &'static str, detail: impl Into<String>) -> KernelError {
    KernelError {
        op,
        detail: detail.into(),
    }
}

pub(crate) fn dims3(op: &'static str, t: &Tensor, what: &str) -> Result<(usize, usize, usize), KernelError> {
    match *t.dims() {
        [a, b, c] => Ok((a, b, c)),
        ref d => Err(mismatch(op, format!("{what} must have 3 axes, got {d:?}"))),
    }
}

pub(crate) fn dims4(
    op: &'static str,
    t: &Tensor,
    what: &str,
) -> Result<(usize, usize, usize, usize), KernelError> {
    match *t.dims() {
        [a, b, c, d] => Ok((a, b, c, d)),
        ref d => Err(mismatch(op, format!("{what} must have 4 axes, got {d:?}"))),
    }
}

/// `(depth, width)` of a sequence given as `(d, w)` or `(d, 1, w)`.
pub(crate) fn seq_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize), KernelError> {
    crate::archspec::as_sequence(t.dims())
        .ok_or_else(|| mismatch(op, format!("input must be a sequence, got {:?}", t.dims())))
}

pub(crate) fn vec_len(op: &'static str, t: &Tensor, what: &str) -> Result<usize, KernelError> {
    match *t.dims() {
        [n] => Ok(n),
        ref d => Err(mismatch(op, format!("{what} must be a vector, got {d:?}"))),
    }
}

/// Left/right zero padding for a "same" convolution; the smaller pad goes
/// on the left for even kernels.
pub fn same_padding(kernel: usize) -> (usize, usize) {
    ((kernel - 1) / 2, kernel / 2)
}

fn to_f32(acc: &[f64], out: &mut [f32]) {
    for (o, a) in out.iter_mut().zip(acc) {
        *o = *a as f32;
    }
}

/// `acc[j] += scale * src[j + shift]` for every `j` where the source index is
/// inside `src`; `shift` may be negative.
#[inline]
fn shifted_axpy(acc: &mut [f64], src: &[f32], shift: isize, scale: f64) {
    let n = acc.len() as isize;
    let m = src.len() as isize;
    let lo = (-shift).max(0);
    let hi = n.min(m - shift);
    if lo >= hi {
        return;
    }
    let dst = &mut acc[lo as usize..hi as usize];
    let s = &src[(lo + shift) as usize..(hi + shift) as usize];
    for (a, &v) in dst.iter_mut().zip(s) {
        *a += scale * v as f64;
    }
}

/// Adds the "same"-padded 2D correlation of one input map with one kernel
/// into `acc` (same extents as the input map).
fn accumulate_same(acc: &mut [f64], map: &[f32], h: usize, w: usize, kernel: &[f32], k1: usize, k2: usize) {
    let (top, _) = same_padding(k1);
    let (left, _) = same_padding(k2);
    for a in 0..k1 {
        for oh in 0..h {
            let ih = oh as isize + a as isize - top as isize;
            if ih < 0 || ih >= h as isize {
                continue;
            }
            let src = &map[ih as usize * w..(ih as usize + 1) * w];
            let dst = &mut acc[oh * w..(oh + 1) * w];
            for b in 0..k2 {
                let wv = kernel[a * k2 + b];
                if wv != 0.0 {
                    shifted_axpy(dst, src, b as isize - left as isize, wv as f64);
                }
            }
        }
    }
}

/// Cross-correlation with "same" zero padding on both spatial axes, no bias.
/// `x`: (Cin, H, W), `w`: (Cout, Cin, K1, K2) → (Cout, H, W).
pub fn conv2d_same(x: &Tensor, w: &Tensor) -> Result<Tensor, KernelError> {
    const OP: &str = "conv2d_same";
    let (cin, h, wd) = dims3(OP, x, "input")?;
    let (cout, wcin, k1, k2) = dims4(OP, w, "weight")?;
    if wcin != cin || k1 == 0 || k2 == 0 {
        return Err(mismatch(OP, format!("weight {:?} incompatible with input {:?}", w.dims(), x.dims())));
    }
    let plane = h * wd;
    let mut out = Tensor::zeros(vec![cout, h, wd]);
    out.data_mut()
        .par_chunks_mut(plane.max(1))
        .enumerate()
        .for_each(|(co, dst)| {
            let mut acc = vec![0f64; plane];
            for ci in 0..cin {
                let map = &x.data()[ci * plane..(ci + 1) * plane];
                let kernel = &w.data()[(co * cin + ci) * k1 * k2..(co * cin + ci + 1) * k1 * k2];
                accumulate_same(&mut acc, map, h, wd, kernel, k1, k2);
            }
            to_f32(&acc, dst);
        });
    Ok(out)
}

/// Unpadded depthwise convolution, no bias. `x`: (Cin, H, W),
/// `w`: (Cin, D, K1, K2) → (Cin·D, H−K1+1, W−K2+1). Output map `ci·D + d`
/// comes from input map `ci` and kernel `(ci, d)`.
pub fn depthwise_conv2d(x: &Tensor, w: &Tensor) -> Result<Tensor, KernelError> {
    const OP: &str = "depthwise_conv2d";
    let (cin, h, wd) = dims3(OP, x, "input")?;
    let (wcin, mult, k1, k2) = dims4(OP, w, "weight")?;
    if wcin != cin || k1 == 0 || k2 == 0 || k1 > h || k2 > wd {
        return Err(mismatch(OP, format!("weight {:?} incompatible with input {:?}", w.dims(), x.dims())));
    }
    let (oh, ow) = (h - k1 + 1, wd - k2 + 1);
    let mut out = Tensor::zeros(vec![cin * mult, oh, ow]);
    out.data_mut()
        .par_chunks_mut((oh * ow).max(1))
        .enumerate()
        .for_each(|(o, dst)| {
            let ci = o / mult;
            let map = &x.data()[ci * h * wd..(ci + 1) * h * wd];
            let kernel = &w.data()[o * k1 * k2..(o + 1) * k1 * k2];
            let mut acc = vec![0f64; oh * ow];
            for a in 0..k1 {
                for r in 0..oh {
                    let src = &map[(r + a) * wd..(r + a + 1) * wd];
                    let row = &mut acc[r * ow..(r + 1) * ow];
                    for b in 0..k2 {
                        shifted_axpy(row, src, b as isize, kernel[a * k2 + b] as f64);
                    }
                }
            }
            to_f32(&acc, dst);
        });
    Ok(out)
}

/// Depthwise "same" stage (one kernel per input map) followed by 1×1 mixing,
/// no bias. `x`: (Cin, H, W), `dw`: (Cin, 1, K1, K2), `pw`: (Cout, Cin, 1, 1).
pub fn separable_conv2d(x: &Tensor, dw: &Tensor, pw: &Tensor) -> Result<Tensor, KernelError> {
    const OP: &str = "separable_conv2d";
    let (cin, h, wd) = dims3(OP, x, "input")?;
    let (dcin, one, k1, k2) = dims4(OP, dw, "depthwise weight")?;
    let (cout, pcin, p1, p2) = dims4(OP, pw, "pointwise weight")?;
    if dcin != cin || one != 1 || pcin != cin || p1 != 1 || p2 != 1 || k1 == 0 || k2 == 0 {
        return Err(mismatch(
            OP,
            format!("weights {:?}/{:?} incompatible with input {:?}", dw.dims(), pw.dims(), x.dims()),
        ));
    }
    let plane = h * wd;
    let stage: Vec<Vec<f64>> = (0..cin)
        .into_par_iter()
        .map(|ci| {
            let mut acc = vec![0f64; plane];
            accumulate_same(
                &mut acc,
                &x.data()[ci * plane..(ci + 1) * plane],
                h,
                wd,
                &dw.data()[ci * k1 * k2..(ci + 1) * k1 * k2],
                k1,
                k2,
            );
            acc
        })
        .collect();
    let mut out = Tensor::zeros(vec![cout, h, wd]);
    out.data_mut()
        .par_chunks_mut(plane.max(1))
        .enumerate()
        .for_each(|(co, dst)| {
            let mut acc = vec![0f64; plane];
            for (ci, s) in stage.iter().enumerate() {
                let m = pw.data()[co * cin + ci] as f64;
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += m * v;
                }
            }
            to_f32(&acc, dst);
        });
    Ok(out)
}

/// Dilated causal 1D convolution with bias. `x`: (Cin, W) or (Cin, 1, W),
/// `w`: (Cout, Cin, K), `b`: (Cout) → (Cout, W). The input is left-padded
/// with `(K−1)·dilation` zeros.
pub fn causal_conv1d(x: &Tensor, w: &Tensor, b: &Tensor, dilation: usize) -> Result<Tensor, KernelError> {
    const OP: &str = "causal_conv1d";
    let (cin, wd) = seq_dims(OP, x)?;
    let (cout, wcin, k) = dims3(OP, w, "weight")?;
    let nb = vec_len(OP, b, "bias")?;
    if wcin != cin || nb != cout || k == 0 || dilation == 0 {
        return Err(mismatch(
            OP,
            format!(
                "weight {:?}, bias {:?}, dilation {dilation} incompatible with input {:?}",
                w.dims(),
                b.dims(),
                x.dims()
            ),
        ));
    }
    let pad = ((k - 1) * dilation) as isize;
    let mut out = Tensor::zeros(vec![cout, wd]);
    out.data_mut()
        .par_chunks_mut(wd.max(1))
        .enumerate()
        .for_each(|(co, dst)| {
            let mut acc = vec![b.data()[co] as f64; wd];
            for ci in 0..cin {
                let src = &x.data()[ci * wd..(ci + 1) * wd];
                for tap in 0..k {
                    let wv = w.data()[(co * cin + ci) * k + tap];
                    shifted_axpy(&mut acc, src, (tap * dilation) as isize - pad, wv as f64);
                }
            }
            to_f32(&acc, dst);
        });
    Ok(out)
}

/// 1×1 convolution with bias over a sequence; `w`: (Cout, Cin, 1).
pub fn pointwise_conv1d(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    match *w.dims() {
        [_, _, 1] => causal_conv1d(x, w, b, 1),
        ref d => Err(mismatch("pointwise_conv1d", format!("weight must be (Cout, Cin, 1), got {d:?}"))),
    }
}

pub(crate) fn check_bn(x: &Tensor, params: [&Tensor; 4]) -> Result<usize, KernelError> {
    let depth = x.depth();
    if x.dims().is_empty() {
        return Err(mismatch("batchnorm", "input has no axes"));
    }
    for p in params {
        if p.dims() != [depth] {
            return Err(mismatch(
                "batchnorm",
                format!("parameter {:?} does not match depth {depth}", p.dims()),
            ));
        }
    }
    Ok(depth)
}

/// Inference-mode batch normalization over the leading axis.
pub fn batchnorm_infer(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &Tensor,
    var: &Tensor,
    eps: f32,
) -> Result<Tensor, KernelError> {
    let depth = check_bn(x, [gamma, beta, mean, var])?;
    let mut out = x.clone();
    let per = x.len() / depth.max(1);
    for (c, chunk) in out.data_mut().chunks_mut(per.max(1)).enumerate().take(depth) {
        let scale = gamma.data()[c] as f64 / (var.data()[c] as f64 + eps as f64).sqrt();
        let shift = beta.data()[c] as f64 - scale * mean.data()[c] as f64;
        for v in chunk {
            *v = (scale * *v as f64 + shift) as f32;
        }
    }
    Ok(out)
}

pub fn elu_scalar(v: f32, alpha: f32) -> f32 {
    if v > 0.0 {
        v
    } else {
        (alpha as f64 * (v as f64).exp_m1()) as f32
    }
}

pub fn elu(x: &Tensor, alpha: f32) -> Tensor {
    x.map(|v| elu_scalar(v, alpha))
}

/// Non-overlapping average pool with stride equal to the window; trailing
/// samples that do not fill a window are dropped.
pub fn avg_pool(x: &Tensor, pool: (usize, usize)) -> Result<Tensor, KernelError> {
    const OP: &str = "avg_pool";
    let (d, h, w) = dims3(OP, x, "input")?;
    let (ph, pw) = pool;
    if ph == 0 || pw == 0 || h < ph || w < pw {
        return Err(mismatch(OP, format!("pool {pool:?} does not fit input {:?}", x.dims())));
    }
    let (oh, ow) = (h / ph, w / pw);
    let inv = 1.0 / (ph * pw) as f64;
    let mut out = Tensor::zeros(vec![d, oh, ow]);
    let src = x.data();
    for c in 0..d {
        for r in 0..oh {
            for q in 0..ow {
                let mut s = 0f64;
                for a in 0..ph {
                    let row = &src[(c * h + r * ph + a) * w + q * pw..][..pw];
                    s += row.iter().map(|&v| v as f64).sum::<f64>();
                }
                out.data_mut()[(c * oh + r) * ow + q] = (s * inv) as f32;
            }
        }
    }
    Ok(out)
}

/// `w · x + b` with `w`: (out, in).
pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    const OP: &str = "dense";
    let n_in = vec_len(OP, x, "input")?;
    let n_out = vec_len(OP, b, "bias")?;
    if w.dims() != [n_out, n_in] {
        return Err(mismatch(
            OP,
            format!("weight {:?} should be [{n_out}, {n_in}]", w.dims()),
        ));
    }
    let data = w
        .data()
        .chunks(n_in.max(1))
        .take(n_out)
        .zip(b.data())
        .map(|(row, &bias)| {
            let dot: f64 = row.iter().zip(x.data()).map(|(&a, &v)| a as f64 * v as f64).sum();
            (dot + bias as f64) as f32
        })
        .collect();
    Ok(Tensor::new(vec![n_out], data).expect("length matches"))
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(x: &Tensor) -> Result<Tensor, KernelError> {
    let n = vec_len("softmax", x, "input")?;
    if n == 0 {
        return Err(mismatch("softmax", "empty input"));
    }
    let max = x.data().iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
    let exps: Vec<f64> = x.data().iter().map(|&v| (v as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let data = exps.iter().map(|e| (e / total) as f32).collect();
    Ok(Tensor::new(vec![n], data).expect("length matches"))
}

/// Elementwise sum of two sequences; the result is (depth, width).
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    let sa = seq_dims("add", a)?;
    let sb = seq_dims("add", b)?;
    if sa != sb {
        return Err(mismatch("add", format!("operands {:?} and {:?} differ", a.dims(), b.dims())));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 + y as f64) as f32)
        .collect();
    Ok(Tensor::new(vec![sa.0, sa.1], data).expect("length matches"))
}

/// Last time step of every feature map.
pub fn slice_last_timestep(x: &Tensor) -> Result<Tensor, KernelError> {
    let (d, w) = seq_dims("slice_last_timestep", x)?;
    if w == 0 {
        return Err(mismatch("slice_last_timestep", "empty sequence"));
    }
    let data = (0..d).map(|c| x.data()[c * w + w - 1]).collect();
    Ok(Tensor::new(vec![d], data).expect("length matches"))
}

pub fn flatten(x: &Tensor) -> Tensor {
    x.clone().reshape(vec![x.len()]).expect("same element count")
}
