//! Dense kernels on row-major buffers and their gradients.

use super::Scalar;

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] = acc[i] + x[i] * y[i];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s = s + *x * *y;
    }
    s
}

/// y += alpha * x
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Row-wise affine map: `y[t] = W x[t] + b` with `W` shaped `[out, inp]`.
pub fn linear<T: Scalar>(w: &[T], b: &[T], x: &[T], inp: usize, out: usize) -> Vec<T> {
    let rows = x.len() / inp;
    let mut y = vec![T::zero(); rows * out];
    for (xr, yr) in x.chunks_exact(inp).zip(y.chunks_exact_mut(out)) {
        for (o, yo) in yr.iter_mut().enumerate() {
            *yo = dot(&w[o * inp..(o + 1) * inp], xr) + b[o];
        }
    }
    y
}

/// Accumulates gradients of [`linear`]; returns the input gradient.
pub fn linear_backward<T: Scalar>(
    w: &[T],
    x: &[T],
    gy: &[T],
    inp: usize,
    out: usize,
    gw: &mut [T],
    gb: &mut [T],
) -> Vec<T> {
    let mut gx = vec![T::zero(); x.len()];
    for ((xr, gyr), gxr) in x.chunks_exact(inp).zip(gy.chunks_exact(out)).zip(gx.chunks_exact_mut(inp)) {
        for (o, &g) in gyr.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            gb[o] = gb[o] + g;
            axpy(g, xr, &mut gw[o * inp..(o + 1) * inp]);
            axpy(g, &w[o * inp..(o + 1) * inp], gxr);
        }
    }
    gx
}

pub const LN_EPS: f64 = 1e-5;

/// Per-row normalization; returns output plus (normalized rows, 1/std) for backward.
pub fn layer_norm<T: Scalar>(x: &[T], g: &[T], b: &[T], d: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = x.len() / d;
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let n = T::of(d as f64);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().copied().sum::<T>() / n;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let rs = T::one() / (var + T::of(LN_EPS)).sqrt();
        rstd[r] = rs;
        for i in 0..d {
            let h = (xr[i] - mean) * rs;
            xhat[r * d + i] = h;
            y[r * d + i] = h * g[i] + b[i];
        }
    }
    (y, xhat, rstd)
}

pub fn layer_norm_backward<T: Scalar>(
    gy: &[T],
    xhat: &[T],
    rstd: &[T],
    g: &[T],
    d: usize,
    gg: &mut [T],
    gb: &mut [T],
) -> Vec<T> {
    let mut gx = vec![T::zero(); gy.len()];
    let n = T::of(d as f64);
    let mut gh = vec![T::zero(); d];
    for r in 0..rstd.len() {
        let gyr = &gy[r * d..(r + 1) * d];
        let xr = &xhat[r * d..(r + 1) * d];
        for i in 0..d {
            gg[i] = gg[i] + gyr[i] * xr[i];
            gb[i] = gb[i] + gyr[i];
            gh[i] = gyr[i] * g[i];
        }
        let mean_gh = gh.iter().copied().sum::<T>() / n;
        let mean_ghx = dot(&gh, xr) / n;
        for i in 0..d {
            gx[r * d + i] = rstd[r] * (gh[i] - mean_gh - xr[i] * mean_ghx);
        }
    }
    gx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu<T: Scalar>(x: T) -> T {
    let inner = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    T::of(0.5) * x * (T::one() + inner.tanh())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let inner = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    let th = inner.tanh();
    let dinner = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * x * x);
    T::of(0.5) * (T::one() + th) + T::of(0.5) * x * (T::one() - th * th) * dinner
}

/// Log-softmax cross-entropy for one row; writes `softmax - onehot` scaled by
/// `scale` into `grad` and returns the loss.
pub fn cross_entropy<T: Scalar>(logits: &[T], target: usize, scale: T, grad: &mut [T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for &l in logits {
        z = z + (l - max).exp();
    }
    let lz = z.ln();
    for (i, (&l, gi)) in logits.iter().zip(grad.iter_mut()).enumerate() {
        let p = (l - max - lz).exp();
        *gi = scale * (if i == target { p - T::one() } else { p });
    }
    lz + max - logits[target]
}
