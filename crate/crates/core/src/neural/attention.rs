//! Causal linear attention with the elu+1 feature map.
//!
//! Buffers are row-major `[n, dim]`. Queries and keys are passed before the
//! feature map is applied.

use super::Scalar;

/// Denominator floor.
pub const ATTN_EPS: f64 = 1e-6;

pub fn phi<T: Scalar>(u: T) -> T {
    if u > T::zero() {
        u + T::one()
    } else {
        u.exp()
    }
}

pub fn phi_grad<T: Scalar>(u: T) -> T {
    if u > T::zero() {
        T::one()
    } else {
        u.exp()
    }
}

/// Running sums for incremental decoding: `S = Σ φ(k) vᵀ`, `z = Σ φ(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnState<T> {
    pub dk: usize,
    pub dv: usize,
    pub s: Vec<T>,
    pub z: Vec<T>,
}

impl<T: Scalar> AttnState<T> {
    pub fn new(dk: usize, dv: usize) -> Self {
        Self {
            dk,
            dv,
            s: vec![T::zero(); dk * dv],
            z: vec![T::zero(); dk],
        }
    }

    /// Absorbs one key/value pair, then answers one query.
    pub fn push(&mut self, q: &[T], k: &[T], v: &[T]) -> Vec<T> {
        for i in 0..self.dk {
            let pk = phi(k[i]);
            self.z[i] = self.z[i] + pk;
            let row = &mut self.s[i * self.dv..(i + 1) * self.dv];
            for (sij, &vj) in row.iter_mut().zip(v) {
                *sij = *sij + pk * vj;
            }
        }
        self.query(q)
    }

    pub fn query(&self, q: &[T]) -> Vec<T> {
        let mut num = vec![T::zero(); self.dv];
        let mut den = T::zero();
        for i in 0..self.dk {
            let pq = phi(q[i]);
            den = den + pq * self.z[i];
            for (nj, &sij) in num.iter_mut().zip(&self.s[i * self.dv..(i + 1) * self.dv]) {
                *nj = *nj + pq * sij;
            }
        }
        let den = den.max(T::of(ATTN_EPS));
        num.into_iter().map(|x| x / den).collect()
    }
}

/// Prefix-sum evaluation, O(n) in sequence length.
pub fn causal_linear_attention<T: Scalar>(q: &[T], k: &[T], v: &[T], dk: usize, dv: usize) -> Vec<T> {
    let n = q.len() / dk;
    let mut state = AttnState::new(dk, dv);
    let mut out = Vec::with_capacity(n * dv);
    for t in 0..n {
        out.extend(state.push(&q[t * dk..(t + 1) * dk], &k[t * dk..(t + 1) * dk], &v[t * dv..(t + 1) * dv]));
    }
    out
}

/// The explicit O(n²) definition: a φ-weighted average over the prefix.
pub fn quadratic_linear_attention<T: Scalar>(q: &[T], k: &[T], v: &[T], dk: usize, dv: usize) -> Vec<T> {
    let n = q.len() / dk;
    let mut out = vec![T::zero(); n * dv];
    for t in 0..n {
        let mut den = T::zero();
        for s in 0..=t {
            let mut w = T::zero();
            for i in 0..dk {
                w = w + phi(q[t * dk + i]) * phi(k[s * dk + i]);
            }
            den = den + w;
            for j in 0..dv {
                out[t * dv + j] = out[t * dv + j] + w * v[s * dv + j];
            }
        }
        let den = den.max(T::of(ATTN_EPS));
        for j in 0..dv {
            out[t * dv + j] = out[t * dv + j] / den;
        }
    }
    out
}

/// Gradients with respect to the raw `q`, `k`, `v` given the output gradient.
pub fn causal_linear_attention_backward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    out: &[T],
    g_out: &[T],
    dk: usize,
    dv: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = q.len() / dk;
    let pq: Vec<T> = q.iter().map(|&x| phi(x)).collect();
    let pk: Vec<T> = k.iter().map(|&x| phi(x)).collect();
    let eps = T::of(ATTN_EPS);

    let mut g_num = vec![T::zero(); n * dv];
    let mut g_den = vec![T::zero(); n];
    let mut gq = vec![T::zero(); n * dk];

    // forward scan: rebuild S_t, z_t for the query gradient
    let mut s = vec![T::zero(); dk * dv];
    let mut z = vec![T::zero(); dk];
    for t in 0..n {
        for i in 0..dk {
            let a = pk[t * dk + i];
            z[i] = z[i] + a;
            for j in 0..dv {
                s[i * dv + j] = s[i * dv + j] + a * v[t * dv + j];
            }
        }
        let qt = &pq[t * dk..(t + 1) * dk];
        let raw_den: T = qt.iter().zip(&z).map(|(&a, &b)| a * b).sum();
        let den = raw_den.max(eps);
        let go = &g_out[t * dv..(t + 1) * dv];
        let ot = &out[t * dv..(t + 1) * dv];
        for j in 0..dv {
            g_num[t * dv + j] = go[j] / den;
        }
        g_den[t] = if raw_den > eps {
            -go.iter().zip(ot).map(|(&a, &b)| a * b).sum::<T>() / den
        } else {
            T::zero()
        };
        for i in 0..dk {
            let mut acc = g_den[t] * z[i];
            for j in 0..dv {
                acc = acc + s[i * dv + j] * g_num[t * dv + j];
            }
            gq[t * dk + i] = acc * phi_grad(q[t * dk + i]);
        }
    }

    // reverse scan: suffix sums of query-side terms
    let mut gs = vec![T::zero(); dk * dv];
    let mut gz = vec![T::zero(); dk];
    let mut gk = vec![T::zero(); n * dk];
    let mut gv = vec![T::zero(); n * dv];
    for t in (0..n).rev() {
        for i in 0..dk {
            let a = pq[t * dk + i];
            gz[i] = gz[i] + g_den[t] * a;
            for j in 0..dv {
                gs[i * dv + j] = gs[i * dv + j] + a * g_num[t * dv + j];
            }
        }
        for i in 0..dk {
            let mut acc = gz[i];
            for j in 0..dv {
                acc = acc + gs[i * dv + j] * v[t * dv + j];
            }
            gk[t * dk + i] = acc * phi_grad(k[t * dk + i]);
        }
        for j in 0..dv {
            let mut acc = T::zero();
            for i in 0..dk {
                acc = acc + gs[i * dv + j] * pk[t * dk + i];
            }
            gv[t * dv + j] = acc;
        }
    }
    (gq, gk, gv)
}
