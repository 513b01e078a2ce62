//! Row-major kernels with hand-written backward passes.
//!
//! Activations are `[T, C]` buffers; weights are `[out, in]`. Backward
//! functions accumulate (`+=`) into their gradient outputs.

use super::Scalar;

pub const LN_EPS: f64 = 1e-5;

pub fn layernorm_forward<F: Scalar>(
    out: &mut [F],
    mean: &mut [F],
    rstd: &mut [F],
    inp: &[F],
    gain: &[F],
    bias: &[F],
    c: usize,
) {
    let n = F::from_usize(c).unwrap();
    let eps = F::from_f64(LN_EPS).unwrap();
    for (t, x) in inp.chunks_exact(c).enumerate() {
        let m = x.iter().fold(F::zero(), |a, &v| a + v) / n;
        let var = x.iter().fold(F::zero(), |a, &v| a + (v - m) * (v - m)) / n;
        let s = F::one() / (var + eps).sqrt();
        let o = &mut out[t * c..(t + 1) * c];
        for i in 0..c {
            o[i] = (x[i] - m) * s * gain[i] + bias[i];
        }
        mean[t] = m;
        rstd[t] = s;
    }
}

#[allow(clippy::too_many_arguments)]
pub fn layernorm_backward<F: Scalar>(
    dinp: &mut [F],
    dgain: &mut [F],
    dbias: &mut [F],
    dout: &[F],
    inp: &[F],
    gain: &[F],
    mean: &[F],
    rstd: &[F],
    c: usize,
) {
    let n = F::from_usize(c).unwrap();
    for t in 0..mean.len() {
        let x = &inp[t * c..(t + 1) * c];
        let dy = &dout[t * c..(t + 1) * c];
        let (m, s) = (mean[t], rstd[t]);
        let mut dnorm_mean = F::zero();
        let mut dnorm_norm_mean = F::zero();
        for i in 0..c {
            let norm = (x[i] - m) * s;
            let dnorm = gain[i] * dy[i];
            dnorm_mean += dnorm;
            dnorm_norm_mean += dnorm * norm;
        }
        dnorm_mean = dnorm_mean / n;
        dnorm_norm_mean = dnorm_norm_mean / n;
        let dx = &mut dinp[t * c..(t + 1) * c];
        for i in 0..c {
            let norm = (x[i] - m) * s;
            let dnorm = gain[i] * dy[i];
            dbias[i] += dy[i];
            dgain[i] += norm * dy[i];
            dx[i] += (dnorm - dnorm_mean - norm * dnorm_norm_mean) * s;
        }
    }
}

/// `out[t, o] = bias[o] + sum_i inp[t, i] * weight[o, i]`
pub fn matmul_forward<F: Scalar>(
    out: &mut [F],
    inp: &[F],
    weight: &[F],
    bias: Option<&[F]>,
    c_in: usize,
    c_out: usize,
) {
    for (x, y) in inp.chunks_exact(c_in).zip(out.chunks_exact_mut(c_out)) {
        for o in 0..c_out {
            let w = &weight[o * c_in..(o + 1) * c_in];
            let mut acc = bias.map_or(F::zero(), |b| b[o]);
            for i in 0..c_in {
                acc += x[i] * w[i];
            }
            y[o] = acc;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn matmul_backward<F: Scalar>(
    dinp: &mut [F],
    dweight: &mut [F],
    dbias: Option<&mut [F]>,
    dout: &[F],
    inp: &[F],
    weight: &[F],
    c_in: usize,
    c_out: usize,
) {
    for (t, dy) in dout.chunks_exact(c_out).enumerate() {
        let dx = &mut dinp[t * c_in..(t + 1) * c_in];
        let x = &inp[t * c_in..(t + 1) * c_in];
        for o in 0..c_out {
            let g = dy[o];
            if g == F::zero() {
                continue;
            }
            let w = &weight[o * c_in..(o + 1) * c_in];
            let dw = &mut dweight[o * c_in..(o + 1) * c_in];
            for i in 0..c_in {
                dx[i] += g * w[i];
                dw[i] += g * x[i];
            }
        }
    }
    if let Some(db) = dbias {
        for dy in dout.chunks_exact(c_out) {
            for o in 0..c_out {
                db[o] += dy[o];
            }
        }
    }
}

const GELU_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_CUBE: f64 = 0.044715;

/// Tanh approximation of GELU.
pub fn gelu_forward<F: Scalar>(out: &mut [F], inp: &[F]) {
    let s = F::from_f64(GELU_SCALE).unwrap();
    let k = F::from_f64(GELU_CUBE).unwrap();
    let half = F::from_f64(0.5).unwrap();
    for (y, &x) in out.iter_mut().zip(inp) {
        *y = half * x * (F::one() + (s * (x + k * x * x * x)).tanh());
    }
}

pub fn gelu_backward<F: Scalar>(dinp: &mut [F], inp: &[F], dout: &[F]) {
    let s = F::from_f64(GELU_SCALE).unwrap();
    let k = F::from_f64(GELU_CUBE).unwrap();
    let half = F::from_f64(0.5).unwrap();
    let three = F::from_f64(3.0).unwrap();
    for ((dx, &x), &dy) in dinp.iter_mut().zip(inp).zip(dout) {
        let u = s * (x + k * x * x * x);
        let th = u.tanh();
        let sech2 = F::one() - th * th;
        let grad = half * (F::one() + th) + half * x * sech2 * s * (F::one() + three * k * x * x);
        *dx += grad * dy;
    }
}

/// Numerically stable in-place softmax; returns nothing, rows sum to one.
pub fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    let mut sum = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = F::one() / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}
