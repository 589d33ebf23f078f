//! Direct loop implementations of every kernel, written straight from the
//! defining sums with explicit bounds checks. Slow; used as oracles.

use super::{dims3, dims4, mismatch, seq_dims, vec_len, KernelError};
use crate::tensor::Tensor;

/// Zero-padded read of `x[c, i, j]` for a (C, H, W) tensor.
fn at3(x: &Tensor, c: usize, i: isize, j: isize) -> f64 {
    let (_, h, w) = (x.dims()[0], x.dims()[1] as isize, x.dims()[2] as isize);
    if i < 0 || j < 0 || i >= h || j >= w {
        0.0
    } else {
        x.data()[(c * h as usize + i as usize) * w as usize + j as usize] as f64
    }
}

fn w4(w: &Tensor, a: usize, b: usize, c: usize, d: usize) -> f64 {
    let dims = w.dims();
    w.data()[((a * dims[1] + b) * dims[2] + c) * dims[3] + d] as f64
}

pub fn conv2d_same(x: &Tensor, w: &Tensor) -> Result<Tensor, KernelError> {
    let (cin, h, wd) = dims3("conv2d_same", x, "input")?;
    let (cout, wcin, k1, k2) = dims4("conv2d_same", w, "weight")?;
    if wcin != cin {
        return Err(mismatch("conv2d_same", "channel mismatch"));
    }
    let (top, left) = ((k1 as isize - 1) / 2, (k2 as isize - 1) / 2);
    let mut out = Tensor::zeros(vec![cout, h, wd]);
    for co in 0..cout {
        for i in 0..h {
            for j in 0..wd {
                let mut s = 0f64;
                for ci in 0..cin {
                    for a in 0..k1 {
                        for b in 0..k2 {
                            let xi = i as isize + a as isize - top;
                            let xj = j as isize + b as isize - left;
                            s += w4(w, co, ci, a, b) * at3(x, ci, xi, xj);
                        }
                    }
                }
                out.data_mut()[(co * h + i) * wd + j] = s as f32;
            }
        }
    }
    Ok(out)
}

pub fn depthwise_conv2d(x: &Tensor, w: &Tensor) -> Result<Tensor, KernelError> {
    let (cin, h, wd) = dims3("depthwise_conv2d", x, "input")?;
    let (wcin, mult, k1, k2) = dims4("depthwise_conv2d", w, "weight")?;
    if wcin != cin || k1 > h || k2 > wd {
        return Err(mismatch("depthwise_conv2d", "kernel does not fit input"));
    }
    let (oh, ow) = (h - k1 + 1, wd - k2 + 1);
    let mut out = Tensor::zeros(vec![cin * mult, oh, ow]);
    for ci in 0..cin {
        for d in 0..mult {
            for i in 0..oh {
                for j in 0..ow {
                    let mut s = 0f64;
                    for a in 0..k1 {
                        for b in 0..k2 {
                            s += w4(w, ci, d, a, b) * at3(x, ci, (i + a) as isize, (j + b) as isize);
                        }
                    }
                    out.data_mut()[((ci * mult + d) * oh + i) * ow + j] = s as f32;
                }
            }
        }
    }
    Ok(out)
}

pub fn separable_conv2d(x: &Tensor, dw: &Tensor, pw: &Tensor) -> Result<Tensor, KernelError> {
    let (cin, h, wd) = dims3("separable_conv2d", x, "input")?;
    let (_, _, k1, k2) = dims4("separable_conv2d", dw, "depthwise weight")?;
    let (cout, pcin, _, _) = dims4("separable_conv2d", pw, "pointwise weight")?;
    if pcin != cin || dw.dims()[0] != cin {
        return Err(mismatch("separable_conv2d", "channel mismatch"));
    }
    let (top, left) = ((k1 as isize - 1) / 2, (k2 as isize - 1) / 2);
    let mut out = Tensor::zeros(vec![cout, h, wd]);
    for co in 0..cout {
        for i in 0..h {
            for j in 0..wd {
                let mut s = 0f64;
                for ci in 0..cin {
                    let mut inner = 0f64;
                    for a in 0..k1 {
                        for b in 0..k2 {
                            inner += w4(dw, ci, 0, a, b)
                                * at3(x, ci, i as isize + a as isize - top, j as isize + b as isize - left);
                        }
                    }
                    s += w4(pw, co, ci, 0, 0) * inner;
                }
                out.data_mut()[(co * h + i) * wd + j] = s as f32;
            }
        }
    }
    Ok(out)
}

pub fn causal_conv1d(x: &Tensor, w: &Tensor, b: &Tensor, dilation: usize) -> Result<Tensor, KernelError> {
    let (cin, wd) = seq_dims("causal_conv1d", x)?;
    let (cout, wcin, k) = dims3("causal_conv1d", w, "weight")?;
    if wcin != cin || vec_len("causal_conv1d", b, "bias")? != cout {
        return Err(mismatch("causal_conv1d", "channel mismatch"));
    }
    let pad = (k - 1) * dilation;
    // explicit padded copy: padded[i, t] = x[i, t - pad]
    let width = wd + pad;
    let mut padded = vec![0f64; cin * width];
    for i in 0..cin {
        for t in 0..wd {
            padded[i * width + pad + t] = x.data()[i * wd + t] as f64;
        }
    }
    let mut out = Tensor::zeros(vec![cout, wd]);
    for c in 0..cout {
        for t in 0..wd {
            let mut s = b.data()[c] as f64;
            for i in 0..cin {
                for tap in 0..k {
                    s += w.data()[(c * cin + i) * k + tap] as f64 * padded[i * width + t + tap * dilation];
                }
            }
            out.data_mut()[c * wd + t] = s as f32;
        }
    }
    Ok(out)
}

pub fn pointwise_conv1d(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    causal_conv1d(x, w, b, 1)
}

pub fn batchnorm_infer(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &Tensor,
    var: &Tensor,
    eps: f32,
) -> Result<Tensor, KernelError> {
    let depth = super::check_bn(x, [gamma, beta, mean, var])?;
    let per = x.len() / depth.max(1);
    let mut out = x.clone();
    for i in 0..x.len() {
        let c = i / per;
        let v = x.data()[i] as f64;
        let y = gamma.data()[c] as f64 * (v - mean.data()[c] as f64)
            / (var.data()[c] as f64 + eps as f64).sqrt()
            + beta.data()[c] as f64;
        out.data_mut()[i] = y as f32;
    }
    Ok(out)
}

pub fn elu(x: &Tensor, alpha: f32) -> Tensor {
    x.map(|v| {
        if v > 0.0 {
            v
        } else {
            (alpha as f64 * ((v as f64).exp() - 1.0)) as f32
        }
    })
}

pub fn avg_pool(x: &Tensor, pool: (usize, usize)) -> Result<Tensor, KernelError> {
    let (d, h, w) = dims3("avg_pool", x, "input")?;
    if pool.0 == 0 || pool.1 == 0 || h < pool.0 || w < pool.1 {
        return Err(mismatch("avg_pool", "pool does not fit"));
    }
    let (oh, ow) = (h / pool.0, w / pool.1);
    let mut out = Tensor::zeros(vec![d, oh, ow]);
    for c in 0..d {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = 0f64;
                for a in 0..pool.0 {
                    for b in 0..pool.1 {
                        s += at3(x, c, (i * pool.0 + a) as isize, (j * pool.1 + b) as isize);
                    }
                }
                out.data_mut()[(c * oh + i) * ow + j] = (s / (pool.0 * pool.1) as f64) as f32;
            }
        }
    }
    Ok(out)
}

pub fn dense(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, KernelError> {
    let n_in = vec_len("dense", x, "input")?;
    let n_out = vec_len("dense", b, "bias")?;
    if w.dims() != [n_out, n_in] {
        return Err(mismatch("dense", "weight shape"));
    }
    let mut out = Tensor::zeros(vec![n_out]);
    for o in 0..n_out {
        let mut s = b.data()[o] as f64;
        for i in 0..n_in {
            s += w.data()[o * n_in + i] as f64 * x.data()[i] as f64;
        }
        out.data_mut()[o] = s as f32;
    }
    Ok(out)
}

pub fn softmax(x: &Tensor) -> Result<Tensor, KernelError> {
    let n = vec_len("softmax", x, "input")?;
    let mut max = f64::NEG_INFINITY;
    for &v in x.data() {
        if (v as f64) > max {
            max = v as f64;
        }
    }
    let mut total = 0f64;
    for &v in x.data() {
        total += (v as f64 - max).exp();
    }
    let mut out = Tensor::zeros(vec![n]);
    for i in 0..n {
        out.data_mut()[i] = ((x.data()[i] as f64 - max).exp() / total) as f32;
    }
    Ok(out)
}
