//! Deterministic reductions and matrix-free Krylov solvers.
//!
//! Reductions use fixed-order pairwise summation so that energies and inner
//! products are bit-reproducible and accurate enough for the tight
//! summation-by-parts tolerances on large grids.

use crate::error::{Error, Result};
use crate::Real;

const PAIRWISE_BASE: usize = 64;

/// Pairwise sum of `f(i)` for `i in 0..n`, fixed association order.
pub fn pairwise<T: Real>(n: usize, f: impl Fn(usize) -> T) -> T {
    fn rec<T: Real, F: Fn(usize) -> T>(lo: usize, hi: usize, f: &F) -> T {
        if hi - lo <= PAIRWISE_BASE {
            let mut s = T::zero();
            for i in lo..hi {
                s += f(i);
            }
            s
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, &f)
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    pairwise(a.len(), |i| a[i] * b[i])
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn sup_norm<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub struct SolveInfo<T> {
    pub iterations: usize,
    pub residual: T,
}

/// Preconditioned conjugate gradient for SPD operators.
///
/// `apply` must implement `out = A x`; `precond_inv` holds the inverse of an
/// SPD diagonal preconditioner. Iterates until
/// `||b - A x||_2 <= tol_rel * ||b||_2` or the iteration cap is hit.
pub fn conjugate_gradient<T: Real>(
    apply: &mut dyn FnMut(&[T], &mut [T]),
    precond_inv: &[T],
    b: &[T],
    x: &mut [T],
    tol_rel: T,
    max_iter: usize,
) -> Result<SolveInfo<T>> {
    let n = b.len();
    let norm_b = norm2(b);
    if norm_b == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(SolveInfo {
            iterations: 0,
            residual: T::zero(),
        });
    }
    let tol_abs = tol_rel * norm_b;

    let mut r = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut ap = vec![T::zero(); n];

    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    for i in 0..n {
        z[i] = precond_inv[i] * r[i];
    }
    p.copy_from_slice(&z);
    let mut rz = dot(&r, &z);
    let mut res = norm2(&r);

    for it in 0..max_iter {
        if res <= tol_abs {
            return Ok(SolveInfo {
                iterations: it,
                residual: res,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            return Err(Error::invalid(
                "conjugate gradient: operator is not positive definite on this subspace",
            ));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        res = norm2(&r);
        for i in 0..n {
            z[i] = precond_inv[i] * r[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if res <= tol_abs {
        return Ok(SolveInfo {
            iterations: max_iter,
            residual: res,
        });
    }
    Err(Error::IterationLimit {
        what: "conjugate gradient",
        iterations: max_iter,
        residual: res.as_f64(),
        last: x.iter().map(|v| v.as_f64()).collect(),
    })
}

/// Preconditioned MINRES for symmetric (possibly indefinite) operators,
/// with an SPD diagonal preconditioner given by its inverse.
///
/// Standard Lanczos-based recurrence; returns when the preconditioned
/// residual estimate drops below `tol_rel` times its initial value.
pub fn minres<T: Real>(
    apply: &mut dyn FnMut(&[T], &mut [T]),
    precond_inv: &[T],
    b: &[T],
    x: &mut [T],
    tol_rel: T,
    max_iter: usize,
) -> SolveInfo<T> {
    let n = b.len();
    let mut r1 = vec![T::zero(); n]; // v_{k-1}
    let mut r2 = vec![T::zero(); n]; // v_k
    let mut y = vec![T::zero(); n];

    apply(x, &mut y);
    for i in 0..n {
        r2[i] = b[i] - y[i];
    }
    for i in 0..n {
        y[i] = precond_inv[i] * r2[i];
    }
    let mut beta1 = dot(&r2, &y);
    if beta1 <= T::zero() {
        return SolveInfo {
            iterations: 0,
            residual: norm2(&r2),
        };
    }
    beta1 = beta1.sqrt();

    let mut oldb = T::zero();
    let mut beta = beta1;
    let mut dbar = T::zero();
    let mut epsln = T::zero();
    let mut phibar = beta1;
    let mut cs = -T::one();
    let mut sn = T::zero();
    let mut w = vec![T::zero(); n];
    let mut w2 = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];

    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let s = T::one() / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        apply(&v, &mut y);
        if it >= 2 {
            let f = beta / oldb;
            for i in 0..n {
                y[i] -= f * r1[i];
            }
        }
        let alfa = dot(&v, &y);
        let f = alfa / beta;
        for i in 0..n {
            y[i] -= f * r2[i];
        }
        r1.copy_from_slice(&r2);
        r2.copy_from_slice(&y);
        for i in 0..n {
            y[i] = precond_inv[i] * r2[i];
        }
        oldb = beta;
        let betasq = dot(&r2, &y);
        if betasq < T::zero() {
            break;
        }
        beta = betasq.sqrt();

        // apply previous rotation
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;

        // new rotation
        let gamma = (gbar * gbar + beta * beta).sqrt().max(T::from_f64(1e-300));
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar = sn * phibar;

        let denom = T::one() / gamma;
        let w1 = w2.clone();
        w2.copy_from_slice(&w);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
        }
        axpy(phi, &w, x);

        if phibar <= tol_rel * beta1 {
            break;
        }
    }
    SolveInfo {
        iterations,
        residual: phibar,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pairwise_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        let pw = pairwise(v.len(), |i| v[i]);
        assert_relative_eq!(naive, pw, max_relative = 1e-12);
    }

    fn diag_apply(d: &[f64]) -> impl FnMut(&[f64], &mut [f64]) + '_ {
        move |x: &[f64], out: &mut [f64]| {
            for i in 0..x.len() {
                out[i] = d[i] * x[i];
            }
        }
    }

    #[test]
    fn cg_solves_spd_diagonal() {
        let d: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let b = vec![1.0; 50];
        let mut x = vec![0.0; 50];
        let pinv: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
        let mut apply = diag_apply(&d);
        conjugate_gradient(&mut apply, &pinv, &b, &mut x, 1e-12, 200).unwrap();
        for i in 0..50 {
            assert_relative_eq!(x[i], 1.0 / d[i], max_relative = 1e-10);
        }
    }

    #[test]
    fn minres_solves_indefinite_diagonal() {
        let d: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 2.0 + i as f64 } else { -(1.0 + i as f64) }).collect();
        let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.17).cos()).collect();
        let mut x = vec![0.0; 40];
        let pinv: Vec<f64> = d.iter().map(|v| 1.0 / v.abs()).collect();
        let mut apply = diag_apply(&d);
        let info = minres(&mut apply, &pinv, &b, &mut x, 1e-12, 400);
        assert!(info.iterations < 400);
        for i in 0..40 {
            assert_relative_eq!(x[i], b[i] / d[i], max_relative = 1e-8);
        }
    }
}
