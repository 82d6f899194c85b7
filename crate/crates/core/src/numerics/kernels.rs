//! Forward kernels shared by the differentiable graph and by plain tensor code.

use crate::error::{Error, Result};
use crate::numerics::tensor::{cst, matmul_into, matmul_nt_into, Real, Tensor};

/// Splits `shape` around `axis` into (outer, extent, inner) strides.
fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range for rank {}", shape.len())));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Shift-stable softmax along `axis`.
pub fn softmax<T: Real>(logits: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    logits.check_finite("softmax input")?;
    let (outer, n, inner) = axis_split(logits.shape(), axis)?;
    let x = logits.data();
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * n * inner + j * inner + i;
            let mut m = T::neg_infinity();
            for j in 0..n {
                m = m.max(x[at(j)]);
            }
            let mut s = T::zero();
            for j in 0..n {
                let e = (x[at(j)] - m).exp();
                out[at(j)] = e;
                s = s + e;
            }
            for j in 0..n {
                out[at(j)] = out[at(j)] / s;
            }
        }
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// `ln Σ exp(a_i)` for two log-domain values; `-inf` acts as log zero.
#[inline]
pub fn log_add<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Overflow-safe log-sum-exp along `axis`; the reduced axis is dropped
/// (a rank-1 input yields a one-element tensor). All `-inf` entries give `-inf`.
pub fn log_sum_exp<T: Real>(values: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if values.data().iter().any(|x| x.is_nan() || *x == T::infinity()) {
        return Err(Error::NonFinite { op: "log_sum_exp input".into(), index: 0 });
    }
    let (outer, n, inner) = axis_split(values.shape(), axis)?;
    let x = values.data();
    let mut out = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| o * n * inner + j * inner + i;
            let m = (0..n).map(|j| x[at(j)]).fold(T::neg_infinity(), T::max);
            if m == T::neg_infinity() {
                out.push(m);
                continue;
            }
            let s: T = (0..n).map(|j| (x[at(j)] - m).exp()).sum();
            out.push(m + s.ln());
        }
    }
    let mut shape: Vec<usize> = values.shape().to_vec();
    shape.remove(axis);
    if shape.is_empty() {
        shape.push(1);
    }
    Tensor::new(shape, out)
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn silu_scalar<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

pub fn silu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(silu_scalar)
}

/// Statistics kept by normalization kernels for the backward pass.
#[derive(Clone, Debug)]
pub struct NormStats<T> {
    pub xhat: Vec<T>,
    /// One inverse standard deviation per normalization group.
    pub inv_std: Vec<T>,
}

fn check_affine<T: Real>(gain: &Tensor<T>, bias: &Tensor<T>, c: usize, op: &str) -> Result<()> {
    if gain.len() != c || bias.len() != c {
        return Err(Error::Shape(format!(
            "{op}: affine parameters have {} / {} entries for {c} channels",
            gain.len(),
            bias.len()
        )));
    }
    Ok(())
}

/// Group normalization of a time-major `[T, C]` sequence: channels are split
/// into `groups` contiguous groups and each group is normalized over all
/// frames and its channels, then a per-channel affine is applied.
pub fn group_norm_stats<T: Real>(
    x: &Tensor<T>,
    groups: usize,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, NormStats<T>)> {
    let (t, c) = x.dims2()?;
    if groups == 0 || c % groups != 0 {
        return Err(Error::Shape(format!("group_norm: {c} channels not divisible by {groups} groups")));
    }
    check_affine(gain, bias, c, "group_norm")?;
    let cg = c / groups;
    let n = (t * cg) as f64;
    let xd = x.data();
    let mut xhat = vec![T::zero(); xd.len()];
    let mut inv_std = Vec::with_capacity(groups);
    for g in 0..groups {
        let cols = g * cg..(g + 1) * cg;
        let mut mean = 0.0;
        for r in 0..t {
            for j in cols.clone() {
                mean += xd[r * c + j].as_f64();
            }
        }
        mean /= n;
        let mut var = 0.0;
        for r in 0..t {
            for j in cols.clone() {
                let d = xd[r * c + j].as_f64() - mean;
                var += d * d;
            }
        }
        var /= n;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(cst(is));
        for r in 0..t {
            for j in cols.clone() {
                xhat[r * c + j] = cst((xd[r * c + j].as_f64() - mean) * is);
            }
        }
    }
    let (gd, bd) = (gain.data(), bias.data());
    let out = xhat
        .iter()
        .enumerate()
        .map(|(i, &h)| h * gd[i % c] + bd[i % c])
        .collect();
    Ok((Tensor::new(vec![t, c], out)?, NormStats { xhat, inv_std }))
}

pub fn group_norm<T: Real>(
    x: &Tensor<T>,
    groups: usize,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    group_norm_stats(x, groups, gain, bias, eps).map(|(y, _)| y)
}

/// Per-row layer normalization of a `[R, C]` matrix.
pub fn layer_norm_stats<T: Real>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, NormStats<T>)> {
    let (r, c) = x.dims2()?;
    check_affine(gain, bias, c, "layer_norm")?;
    let (gd, bd) = (gain.data(), bias.data());
    let mut xhat = Vec::with_capacity(r * c);
    let mut out = Vec::with_capacity(r * c);
    let mut inv_std = Vec::with_capacity(r);
    for i in 0..r {
        let row = x.row(i);
        let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / c as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(cst(is));
        for (j, v) in row.iter().enumerate() {
            let h: T = cst((v.as_f64() - mean) * is);
            xhat.push(h);
            out.push(h * gd[j] + bd[j]);
        }
    }
    Ok((Tensor::new(vec![r, c], out)?, NormStats { xhat, inv_std }))
}

pub fn layer_norm<T: Real>(x: &Tensor<T>, gain: &Tensor<T>, bias: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    layer_norm_stats(x, gain, bias, eps).map(|(y, _)| y)
}

/// Output length of a 1-D convolution, or `None` for invalid geometry.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// 1-D convolution over time. `x` is `[T, Cin]`, `kernel` is `[K, Cin, Cout]`;
/// zero padding on both ends. Returns `[T_out, Cout]`.
pub fn conv1d<T: Real>(x: &Tensor<T>, kernel: &Tensor<T>, stride: usize, padding: usize) -> Result<Tensor<T>> {
    let (len, cin) = x.dims2()?;
    let (k, kcin, cout) = match kernel.shape() {
        &[k, ci, co] => (k, ci, co),
        s => return Err(Error::Shape(format!("conv1d kernel must be [K, Cin, Cout], got {s:?}"))),
    };
    if kcin != cin {
        return Err(Error::Shape(format!("conv1d: input has {cin} channels, kernel expects {kcin}")));
    }
    let tout = conv_out_len(len, k, stride, padding).ok_or_else(|| {
        Error::Shape(format!("conv1d: kernel {k} stride {stride} padding {padding} invalid for length {len}"))
    })?;
    let mut out = vec![T::zero(); tout * cout];
    let (xd, wd) = (x.data(), kernel.data());
    for t in 0..tout {
        let orow = &mut out[t * cout..(t + 1) * cout];
        for kk in 0..k {
            let r = (t * stride + kk) as isize - padding as isize;
            if r < 0 || r as usize >= len {
                continue;
            }
            let xrow = &xd[r as usize * cin..(r as usize + 1) * cin];
            matmul_into(xrow, &wd[kk * cin * cout..(kk + 1) * cin * cout], orow, 1, cin, cout);
        }
    }
    Tensor::new(vec![tout, cout], out)
}

/// `softmax(q·kᵀ/√d_k)·v` for a single head.
pub fn scaled_dot_attention<T: Real>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>) -> Result<Tensor<T>> {
    let (tq, dk) = q.dims2()?;
    let (tk, dk2) = k.dims2()?;
    let (tv, dv) = v.dims2()?;
    if dk != dk2 || tk != tv {
        return Err(Error::Shape(format!(
            "attention: q {tq}x{dk}, k {tk}x{dk2}, v {tv}x{dv} are incompatible"
        )));
    }
    let mut scores = vec![T::zero(); tq * tk];
    matmul_nt_into(q.data(), k.data(), &mut scores, tq, dk, tk);
    let scale: T = cst(1.0 / (dk as f64).sqrt());
    let scores = Tensor::new(vec![tq, tk], scores.into_iter().map(|s| s * scale).collect())?;
    let weights = softmax(&scores, 1)?;
    weights.matmul(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t64(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn softmax_symmetric_and_known() {
        let s = softmax(&t64(&[2], &[0.0, 0.0]), 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax(&t64(&[2], &[1f64.ln(), 3f64.ln()]), 0).unwrap();
        assert!((s.data()[0] - 0.25).abs() < 1e-12);
        assert!((s.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariant_and_axis() {
        let x = t64(&[2, 3], &[0.3, -1.0, 2.0, 5.0, 5.5, -3.0]);
        let shifted = x.map(|v| v + 1234.5);
        for axis in 0..2 {
            let a = softmax(&x, axis).unwrap();
            let b = softmax(&shifted, axis).unwrap();
            for (p, q) in a.data().iter().zip(b.data()) {
                assert!((p - q).abs() < 1e-6);
            }
        }
        let cols = softmax(&x, 0).unwrap();
        for j in 0..3 {
            assert!((cols.data()[j] + cols.data()[3 + j] - 1.0).abs() < 1e-12);
        }
        assert!(softmax(&t64(&[1], &[f64::NAN]), 0).is_err());
        assert!(softmax(&x, 2).is_err());
    }

    #[test]
    fn log_sum_exp_cases() {
        let a = 0.7;
        let r = log_sum_exp(&t64(&[2], &[a, a]), 0).unwrap().item();
        assert!((r - (a + 2f64.ln())).abs() < 1e-12);
        let r = log_sum_exp(&t64(&[2], &[a, f64::NEG_INFINITY]), 0).unwrap().item();
        assert_eq!(r, a);
        let r = log_sum_exp(&t64(&[2], &[0.0, 3f64.ln()]), 0).unwrap().item();
        assert!((r - 4f64.ln()).abs() < 1e-9);
        let r = log_sum_exp(&t64(&[2], &[f64::NEG_INFINITY; 2]), 0).unwrap().item();
        assert_eq!(r, f64::NEG_INFINITY);
        let r = log_sum_exp(&t64(&[2], &[1e4, 1e4]), 0).unwrap().item();
        assert!((r - (1e4 + 2f64.ln())).abs() < 1e-9);
        let r = log_sum_exp(&t64(&[2], &[-1e4, -1e4]), 0).unwrap().item();
        assert!((r - (-1e4 + 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn log_sum_exp_reduces_axis() {
        let x = t64(&[2, 3], &[0.0, 1.0, 2.0, -1.0, -1.0, -1.0]);
        let rows = log_sum_exp(&x, 1).unwrap();
        assert_eq!(rows.shape(), &[2]);
        let want = (1.0 + 1f64.exp() + 2f64.exp()).ln();
        assert!((rows.data()[0] - want).abs() < 1e-12);
        assert!((rows.data()[1] - (-1.0 + 3f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn silu_values() {
        assert_eq!(silu_scalar(0.0f64), 0.0);
        assert!((silu_scalar(30.0f64) - 30.0).abs() < 1e-6);
        assert!((silu_scalar(1.0f64) - 0.731059).abs() < 1e-5);
        assert!(silu_scalar(-800.0f64).is_finite());
    }

    #[test]
    fn group_norm_cases() {
        let ones = Tensor::<f64>::full(&[4], 1.0);
        let zeros = Tensor::<f64>::zeros(&[4]);
        let y = group_norm(&Tensor::full(&[3, 4], 2.5), 2, &ones, &zeros, 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!(group_norm(&Tensor::full(&[3, 4], 2.5), 3, &ones, &zeros, 1e-5).is_err());

        let x = t64(&[3, 4], &[0.1, 2.0, -1.0, 4.0, 0.5, 0.0, 3.0, -2.0, 1.5, 1.0, 0.2, 0.7]);
        let per_channel = group_norm(&x, 4, &ones, &zeros, 1e-5).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = (0..3).map(|r| per_channel.data()[r * 4 + j]).collect();
            let mean: f64 = col.iter().sum::<f64>() / 3.0;
            let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-4 && (var - 1.0).abs() < 1e-4);
        }

        // groups = 1: layer-norm over the whole sequence, evaluated directly.
        let y = group_norm(&x, 1, &ones, &zeros, 1e-5).unwrap();
        let n = 12.0;
        let mean: f64 = x.data().iter().sum::<f64>() / n;
        let var: f64 = x.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        for (yv, xv) in y.data().iter().zip(x.data()) {
            assert!((yv - (xv - mean) / (var + 1e-5).sqrt()).abs() < 1e-5);
        }
    }

    #[test]
    fn conv1d_cases() {
        let x = t64(&[3, 1], &[1.0, 2.0, 3.0]);
        let id = conv1d(&x, &t64(&[1, 1, 1], &[1.0]), 1, 0).unwrap();
        assert_eq!(id.data(), x.data());
        let sums = conv1d(&x, &t64(&[2, 1, 1], &[1.0, 1.0]), 1, 0).unwrap();
        assert_eq!(sums.data(), &[3.0, 5.0]);
        let x8 = Tensor::<f64>::full(&[8, 2], 1.0);
        let half = conv1d(&x8, &Tensor::full(&[3, 2, 2], 0.5), 2, 1).unwrap();
        assert_eq!(half.shape(), &[4, 2]);
        assert!(conv1d(&x, &t64(&[5, 1, 1], &[1.0; 5]), 1, 0).is_err());
        assert!(conv1d(&x, &t64(&[1, 2, 1], &[1.0; 2]), 1, 0).is_err());
    }

    #[test]
    fn attention_cases() {
        let q = t64(&[1, 2], &[0.3, -0.2]);
        let k = t64(&[1, 2], &[1.0, 2.0]);
        let v = t64(&[1, 3], &[4.0, 5.0, 6.0]);
        assert_eq!(scaled_dot_attention(&q, &k, &v).unwrap().data(), v.data());

        let k_same = t64(&[3, 2], &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let vs = t64(&[3, 1], &[1.0, 2.0, 6.0]);
        let out = scaled_dot_attention(&q, &k_same, &vs).unwrap();
        assert!((out.item() - 3.0).abs() < 1e-12);

        // two steps, hand evaluated: scores q·k/√2
        let q = t64(&[1, 2], &[1.0, 0.0]);
        let k = t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let v = t64(&[2, 1], &[10.0, 20.0]);
        let s = 1.0 / 2f64.sqrt();
        let w0 = s.exp() / (s.exp() + 1.0);
        let want = w0 * 10.0 + (1.0 - w0) * 20.0;
        let out = scaled_dot_attention(&q, &k, &v).unwrap();
        assert!((out.item() - want).abs() < 1e-6);
        assert!(scaled_dot_attention(&q, &t64(&[2, 3], &[0.0; 6]), &v).is_err());
    }
}
