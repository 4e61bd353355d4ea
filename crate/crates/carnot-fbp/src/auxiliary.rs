//! Auxiliary problems feeding the main solvers: the principal Dirichlet
//! eigenpair of `-L`, the singular auxiliary solution `u_beta`, the
//! admissibility threshold `beta*` and the upper barrier `v_0`.

use crate::error::{Error, Result};
use crate::geometry::{Grid, ScalarField};
use crate::linalg::{self, conjugate_gradient};
use crate::model::ModelParams;
use crate::operators::SubLaplacian;
use crate::Real;

/// Principal Dirichlet eigenpair of the generalized problem
/// `A phi = lambda W phi` on interior nodes.
#[derive(Debug, Clone)]
pub struct Eigenpair<T> {
    pub lambda1: T,
    /// Positive eigenfunction normalized to sup-norm 1.
    pub phi1: ScalarField<T>,
}

pub(crate) struct MaskedOp<'a, T> {
    pub op: &'a SubLaplacian<T>,
    pub precond_inv: Vec<T>,
}

impl<'a, T: Real> MaskedOp<'a, T> {
    pub fn new(op: &'a SubLaplacian<T>) -> Self {
        let grid = op.grid();
        let diag = op.diagonal();
        let precond_inv = (0..grid.num_nodes())
            .map(|j| {
                if grid.is_interior(j) && diag[j] > T::zero() {
                    T::one() / diag[j]
                } else {
                    T::one()
                }
            })
            .collect();
        MaskedOp { op, precond_inv }
    }

    /// CG solve of `A x = rhs` on interior nodes; `rhs` must vanish on the
    /// boundary layer.
    pub fn solve(&self, rhs: &[T], x0: Option<&[T]>, tol: T, max_iter: usize) -> Result<Vec<T>> {
        let mut x = match x0 {
            Some(v) => v.to_vec(),
            None => vec![T::zero(); rhs.len()],
        };
        let mut apply = |v: &[T], out: &mut [T]| self.op.apply_masked(v, out);
        conjugate_gradient(&mut apply, &self.precond_inv, rhs, &mut x, tol, max_iter)?;
        Ok(x)
    }
}

/// Smallest generalized eigenpair by inverse power iteration with CG inner
/// solves. Errors with the last iterate attached if the iteration cap is hit.
pub fn principal_eigenpair<T: Real>(op: &SubLaplacian<T>) -> Result<Eigenpair<T>> {
    principal_eigenpair_with(op, T::from_f64(1e-9), 200)
}

pub fn principal_eigenpair_with<T: Real>(
    op: &SubLaplacian<T>,
    tol: T,
    max_outer: usize,
) -> Result<Eigenpair<T>> {
    let grid = op.grid();
    let n = grid.num_nodes();
    let masked = MaskedOp::new(op);
    let weights: Vec<T> = (0..n).map(|j| grid.haar_weight(j)).collect();

    let mut x: Vec<T> = (0..n)
        .map(|j| if grid.is_interior(j) { T::one() } else { T::zero() })
        .collect();
    let wx_norm = linalg::pairwise(n, |j| weights[j] * x[j] * x[j]).sqrt();
    x.iter_mut().for_each(|v| *v /= wx_norm);

    let mut rhs = vec![T::zero(); n];
    let mut ay = vec![T::zero(); n];
    let mut lambda = T::zero();

    for outer in 0..max_outer {
        for j in 0..n {
            rhs[j] = weights[j] * x[j];
            if !grid.is_interior(j) {
                rhs[j] = T::zero();
            }
        }
        let y = masked.solve(&rhs, Some(&x), T::from_f64(1e-12), 200_000)?;
        // Rayleigh quotient and residual of the candidate
        let ywy = linalg::pairwise(n, |j| weights[j] * y[j] * y[j]);
        op.apply_masked(&y, &mut ay);
        let yay = linalg::dot(&y, &ay);
        lambda = yay / ywy;
        let res = linalg::pairwise(n, |j| {
            let r = ay[j] - lambda * weights[j] * y[j];
            r * r
        })
        .sqrt();
        let scale = linalg::pairwise(n, |j| {
            let v = weights[j] * y[j];
            v * v
        })
        .sqrt();
        let norm = ywy.sqrt();
        for j in 0..n {
            x[j] = y[j] / norm;
        }
        if res <= tol * lambda * scale && outer >= 1 {
            // positive orientation, sup normalization
            let total: T = linalg::pairwise(n, |j| x[j]);
            if total < T::zero() {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            let sup = linalg::sup_norm(&x);
            x.iter_mut().for_each(|v| *v /= sup);
            return Ok(Eigenpair {
                lambda1: lambda,
                phi1: ScalarField { values: x },
            });
        }
    }
    Err(Error::IterationLimit {
        what: "inverse power iteration",
        iterations: max_outer,
        residual: lambda.as_f64(),
        last: x.iter().map(|v| v.as_f64()).collect(),
    })
}

/// Solution of the singular auxiliary problem `A u = W beta u^{-delta}`.
#[derive(Debug, Clone)]
pub struct SingularSolution<T> {
    pub u_beta: ScalarField<T>,
    /// Scaled residual `||A u - W beta u^{-delta}||_2 / ||W beta u^{-delta}||_2`.
    pub residual_norm: T,
    pub beta_param: T,
    pub delta: T,
    pub iterations: usize,
}

/// Monotone iteration with a geometrically shrinking positivity floor,
/// `u^{k+1} = A^{-1}(W beta max(u^k, floor_k)^{-delta})`, `floor_k = 1e-2 * 2^-k`
/// clamped at 1e-12, followed by a Newton polish on the convex energy
/// `1/2 <u, A u> - beta/(1-delta) int max(u, floor)^{1-delta}` whenever the
/// plain alternation has not reached the 1e-9 successive sup-difference
/// target. The Newton stage is globally convergent (the energy is strictly
/// convex), which covers the degenerate-corner nodes of the Heisenberg
/// model where the alternation stalls.
pub fn solve_singular<T: Real>(
    op: &SubLaplacian<T>,
    beta_param: T,
    delta: T,
) -> Result<SingularSolution<T>> {
    if !(beta_param > T::zero()) {
        return Err(Error::invalid(format!(
            "solve_singular requires beta > 0, got {beta_param}"
        )));
    }
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::invalid(format!(
            "solve_singular requires 0 < delta < 1, got {delta}"
        )));
    }
    let grid = op.grid();
    let n = grid.num_nodes();
    let masked = MaskedOp::new(op);
    let weights: Vec<T> = (0..n).map(|j| grid.haar_weight(j)).collect();

    let floor0 = T::from_f64(1e-2);
    let floor_min = T::from_f64(1e-12);
    let cg_tol = T::from_f64(1e-12);
    let stop_tol = T::from_f64(1e-9);
    let max_alternating = 60;

    let mut rhs = vec![T::zero(); n];
    let rhs_of = |u: &[T], floor: T, rhs: &mut Vec<T>| {
        for j in 0..n {
            rhs[j] = if grid.is_interior(j) {
                weights[j] * beta_param * u[j].max(floor).powf(-delta)
            } else {
                T::zero()
            };
        }
    };

    let zero = vec![T::zero(); n];
    rhs_of(&zero, floor0, &mut rhs);
    let mut u = masked.solve(&rhs, None, cg_tol, 200_000)?;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_alternating {
        iterations += 1;
        let floor = (floor0 * T::from_f64(0.5).powi(iterations as i32)).max(floor_min);
        rhs_of(&u, floor, &mut rhs);
        let next = masked.solve(&rhs, Some(&u), cg_tol, 200_000)?;
        let mut min_int = T::infinity();
        for j in 0..n {
            if grid.is_interior(j) {
                min_int = min_int.min(next[j]);
            }
        }
        let sup_diff = next
            .iter()
            .zip(&u)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        u = next;
        // transient negative values are harmless: the right-hand side is
        // clamped at the floor
        if sup_diff <= stop_tol && (floor <= min_int || floor <= floor_min) {
            converged = true;
            break;
        }
    }

    if !converged {
        newton_polish_singular(
            op,
            &masked,
            &weights,
            beta_param,
            delta,
            floor_min,
            &mut u,
            &mut iterations,
        )?;
    }

    let mut min_int = T::infinity();
    let mut min_node = 0;
    for j in 0..n {
        if grid.is_interior(j) && u[j] < min_int {
            min_int = u[j];
            min_node = j;
        }
    }
    if !(min_int > T::zero()) {
        return Err(Error::PositivityViolation {
            what: "singular solve",
            node: min_node,
            value: min_int.as_f64(),
            dump: u.iter().map(|v| v.as_f64()).collect(),
        });
    }

    // scaled residual of the converged field
    rhs_of(&u, floor_min, &mut rhs);
    let mut au = vec![T::zero(); n];
    op.apply_masked(&u, &mut au);
    let num = linalg::pairwise(n, |j| {
        let d = au[j] - rhs[j];
        d * d
    })
    .sqrt();
    let den = linalg::norm2(&rhs);
    Ok(SingularSolution {
        u_beta: ScalarField { values: u },
        residual_norm: num / den,
        beta_param,
        delta,
        iterations,
    })
}

/// Newton iteration on `J(u) = 1/2 <u,Au> - beta/(1-delta) sum w max(u,fl)^{1-delta}`,
/// strictly convex, hence globally convergent with Armijo damping.
#[allow(clippy::too_many_arguments)]
fn newton_polish_singular<T: Real>(
    op: &SubLaplacian<T>,
    masked: &MaskedOp<T>,
    weights: &[T],
    beta_param: T,
    delta: T,
    floor: T,
    u: &mut Vec<T>,
    iterations: &mut usize,
) -> Result<()> {
    let grid = op.grid();
    let n = grid.num_nodes();
    let om = T::one() - delta;
    let energy = |u: &[T], au: &[T]| -> T {
        let quad = T::from_f64(0.5) * linalg::dot(u, au);
        let sing = linalg::pairwise(n, |j| {
            if grid.is_interior(j) {
                weights[j] * u[j].max(floor).powf(om)
            } else {
                T::zero()
            }
        });
        quad - beta_param / om * sing
    };

    let mut au = vec![T::zero(); n];
    let mut res = vec![T::zero(); n];
    let mut dir = vec![T::zero(); n];
    let mut hdiag = vec![T::zero(); n];
    let mut trial = vec![T::zero(); n];
    let mut au_trial = vec![T::zero(); n];
    let diag_a = op.diagonal();

    for newton_it in 0..80 {
        *iterations += 1;
        op.apply_masked(u, &mut au);
        let mut res_norm = T::zero();
        let mut rhs_norm = T::zero();
        for j in 0..n {
            if grid.is_interior(j) {
                let g = weights[j] * beta_param * u[j].max(floor).powf(-delta);
                res[j] = au[j] - g;
                res_norm = res_norm.max(res[j].abs());
                rhs_norm = rhs_norm.max(g.abs());
            } else {
                res[j] = T::zero();
            }
        }
        if res_norm <= T::from_f64(1e-11) * rhs_norm.max(T::one()) {
            return Ok(());
        }
        // Hessian: A + W beta delta max(u,fl)^{-delta-1} on {u > fl}
        for j in 0..n {
            hdiag[j] = if grid.is_interior(j) {
                let extra = if u[j] > floor {
                    weights[j] * beta_param * delta * u[j].powf(-delta - T::one())
                } else {
                    T::zero()
                };
                diag_a[j] + extra
            } else {
                T::one()
            };
        }
        let pinv: Vec<T> = hdiag.iter().map(|&d| T::one() / d).collect();
        let u_snapshot = u.clone();
        let mut apply_h = |v: &[T], out: &mut [T]| {
            op.apply_masked(v, out);
            for j in 0..n {
                if grid.is_interior(j) && u_snapshot[j] > floor {
                    out[j] += weights[j]
                        * beta_param
                        * delta
                        * u_snapshot[j].powf(-delta - T::one())
                        * v[j];
                }
            }
        };
        let neg_res: Vec<T> = res.iter().map(|&r| -r).collect();
        dir.iter_mut().for_each(|v| *v = T::zero());
        conjugate_gradient(&mut apply_h, &pinv, &neg_res, &mut dir, T::from_f64(1e-10), 200_000)?;

        // Armijo on the convex energy
        let e0 = energy(u, &au);
        let slope = linalg::dot(&res, &dir);
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            for j in 0..n {
                trial[j] = u[j] + t * dir[j];
            }
            op.apply_masked(&trial, &mut au_trial);
            let e1 = energy(&trial, &au_trial);
            if e1 <= e0 + T::from_f64(1e-4) * t * slope {
                u.copy_from_slice(&trial);
                accepted = true;
                break;
            }
            t *= T::from_f64(0.5);
        }
        if !accepted {
            return Err(Error::Stagnation(format!(
                "singular Newton line search stalled at iteration {newton_it}"
            )));
        }
    }
    Err(Error::IterationLimit {
        what: "singular Newton polish",
        iterations: 80,
        residual: f64::NAN,
        last: u.iter().map(|v| v.as_f64()).collect(),
    })
}

/// Operationalized admissibility threshold `beta*`: the supremum (bisection
/// over `(0, 1e6]`, 60 iterations) of `beta` such that some `t` on a
/// 2000-point logarithmic grid in `[1e-6, 1e6]` satisfies
/// `beta t^{-delta} + lambda g_min((t-1)_+) <= lambda1 t`. Returns infinity
/// when every `beta` up to the cap is admissible.
pub fn beta_star_estimate<T: Real>(params: &ModelParams<T>, lambda1: T) -> Result<T> {
    if !(lambda1 > T::zero()) {
        return Err(Error::invalid(format!(
            "beta_star_estimate requires lambda1 > 0, got {lambda1}"
        )));
    }
    let count = 2000;
    let lo = T::from_f64(1e-6).ln();
    let hi = T::from_f64(1e6).ln();
    // largest admissible beta over the grid: max_t (lambda1 t - lambda g)_+ t^delta
    let mut best = T::zero();
    for i in 0..count {
        let frac = T::from_usize(i) / T::from_usize(count - 1);
        let t = (lo + (hi - lo) * frac).exp();
        let slack = lambda1 * t - params.lambda * params.g_min((t - T::one()).max(T::zero()));
        if slack > T::zero() {
            best = best.max(slack * t.powf(params.delta));
        }
    }
    let cap = T::from_f64(1e6);
    let admissible = |beta: T| beta <= best;
    if admissible(cap) {
        return Ok(T::infinity());
    }
    if !admissible(T::from_f64(1e-300)) {
        return Ok(T::zero());
    }
    let mut lo_b = T::zero();
    let mut hi_b = cap;
    for _ in 0..60 {
        let mid = (lo_b + hi_b) * T::from_f64(0.5);
        if admissible(mid) {
            lo_b = mid;
        } else {
            hi_b = mid;
        }
    }
    Ok(lo_b)
}

/// Upper barrier: solve `A v0 = W (lambda A0 + beta u_beta^{-delta})`.
/// `a0_bound` must dominate `sup g_eps` over the relevant range, e.g.
/// [`ModelParams::growth_bound`] at the iterate's sup-norm.
pub fn barrier_v0<T: Real>(
    op: &SubLaplacian<T>,
    params: &ModelParams<T>,
    ctx: &crate::model::CutoffContext<T>,
    a0_bound: T,
) -> Result<ScalarField<T>> {
    let grid = op.grid();
    let n = grid.num_nodes();
    let masked = MaskedOp::new(op);
    let mut rhs = vec![T::zero(); n];
    for j in 0..n {
        if grid.is_interior(j) {
            let plateau = ctx.phi(j, T::zero()); // u_beta^{-delta} at the node
            rhs[j] = grid.haar_weight(j) * (params.lambda * a0_bound + params.beta * plateau);
        }
    }
    let v = masked.solve(&rhs, None, T::from_f64(1e-12), 200_000)?;
    Ok(ScalarField { values: v })
}

impl<T: Real> ModelParams<T> {
    /// `A0 = a0 + a1 * sup_u^{p-1}`, the (g1) bound on `g_eps` given a
    /// sup-norm bound on the iterate.
    pub fn growth_bound(&self, sup_u: T) -> T {
        self.a0 + self.a1 * sup_u.max(T::zero()).powf(self.p - T::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GroupModel;
    use crate::model::{CutoffContext, GKind};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn op_1d(n: usize) -> SubLaplacian<f64> {
        let g = GroupModel::euclidean(1).unwrap();
        let grid = Grid::unit_box(1, n).unwrap();
        SubLaplacian::new(&g, &grid).unwrap()
    }

    #[test]
    fn eigenpair_1d_is_pi_squared() {
        let op = op_1d(512);
        let eig = principal_eigenpair(&op).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!(
            (eig.lambda1 - pi2).abs() / pi2 < 1e-3,
            "lambda1 {} vs pi^2 {}",
            eig.lambda1,
            pi2
        );
        assert_relative_eq!(eig.phi1.sup_norm(), 1.0, max_relative = 1e-12);
        assert!(eig
            .phi1
            .values
            .iter()
            .enumerate()
            .all(|(j, &v)| v > 0.0 || !op.grid().is_interior(j)));
    }

    #[test]
    fn eigenpair_2d_is_two_pi_squared() {
        let g = GroupModel::euclidean(2).unwrap();
        let grid: Grid<f64> = Grid::unit_box(2, 64).unwrap();
        let op = SubLaplacian::new(&g, &grid).unwrap();
        let eig = principal_eigenpair(&op).unwrap();
        let expect = 2.0 * std::f64::consts::PI.powi(2);
        assert!(
            (eig.lambda1 - expect).abs() / expect < 2e-3,
            "lambda1 {} vs {}",
            eig.lambda1,
            expect
        );
    }

    #[test]
    fn eigen_residual_certificate() {
        let op = op_1d(128);
        let eig = principal_eigenpair(&op).unwrap();
        let grid = op.grid();
        let n = grid.num_nodes();
        let mut ay = vec![0.0; n];
        op.apply_masked(&eig.phi1.values, &mut ay);
        let res = linalg::pairwise(n, |j| {
            let r = ay[j] - eig.lambda1 * grid.haar_weight(j) * eig.phi1.values[j];
            r * r
        })
        .sqrt();
        assert!(res <= 1e-8 * eig.lambda1, "residual {res:.3e}");
    }

    #[test]
    fn maximum_principle_spot_check() {
        // Euclidean models assemble M-matrices: solutions of A u = f >= 0
        // are nonnegative up to solver tolerance for arbitrary f.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = GroupModel::euclidean(2).unwrap();
        let grid: Grid<f64> = Grid::unit_box(2, 17).unwrap();
        let op = SubLaplacian::new(&g, &grid).unwrap();
        let masked = MaskedOp::new(&op);
        for _ in 0..20 {
            let mut f = vec![0.0; grid.num_nodes()];
            for (j, fj) in f.iter_mut().enumerate() {
                if grid.is_interior(j) {
                    *fj = grid.haar_weight(j) * rng.gen_range(0.0..1.0);
                }
            }
            let u = masked.solve(&f, None, 1e-12, 100_000).unwrap();
            let sup = linalg::sup_norm(&u);
            let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-10 * sup, "negative undershoot {min:.3e} (sup {sup:.3e})");
        }
    }

    #[test]
    fn maximum_principle_heisenberg_smooth_sources() {
        // The degenerate cross-term tensor of H^1 admits no second-order
        // monotone stencil, so the discrete maximum principle only holds up
        // to a discretization-level undershoot; quantified here on smooth
        // nonnegative sources.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = GroupModel::heisenberg1();
        let grid: Grid<f64> = Grid::unit_box(3, 17).unwrap();
        let op = SubLaplacian::new(&g, &grid).unwrap();
        let masked = MaskedOp::new(&op);
        let mut x = [0.0; 3];
        for _ in 0..20 {
            let c = [
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.2..0.8),
                rng.gen_range(0.2..0.8),
            ];
            let r: f64 = rng.gen_range(0.15..0.5);
            let mut f = vec![0.0; grid.num_nodes()];
            for (j, fj) in f.iter_mut().enumerate() {
                if grid.is_interior(j) {
                    grid.node_coords(j, &mut x);
                    let d2: f64 = (0..3).map(|k| (x[k] - c[k]).powi(2)).sum();
                    let b = (1.0 - d2 / (r * r)).max(0.0);
                    *fj = grid.haar_weight(j) * b * b;
                }
            }
            let u = masked.solve(&f, None, 1e-12, 100_000).unwrap();
            let sup = linalg::sup_norm(&u);
            let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -2e-2 * sup, "undershoot {min:.3e} vs sup {sup:.3e}");
        }
    }

    #[test]
    fn singular_delta_to_zero_limit() {
        let op = op_1d(128);
        let beta = 1.0;
        let sol = solve_singular(&op, beta, 1e-6).unwrap();
        // delta = 0 closed form: u = beta x (1-x) / 2
        let grid = op.grid();
        let mut x = [0.0];
        let mut worst: f64 = 0.0;
        for j in 0..grid.num_nodes() {
            grid.node_coords(j, &mut x);
            let exact = beta * x[0] * (1.0 - x[0]) / 2.0;
            worst = worst.max((sol.u_beta.values[j] - exact).abs());
        }
        let max_exact = beta / 8.0;
        assert!(worst / max_exact < 1e-3, "deviation {worst:.3e}");
        assert!((sol.u_beta.sup_norm() - max_exact).abs() / max_exact < 1e-3);
    }

    #[test]
    fn singular_scaling_law() {
        let op = op_1d(128);
        let delta = 0.5;
        let beta = 0.7;
        let c: f64 = 2.0;
        let base = solve_singular(&op, beta, delta).unwrap();
        let scaled = solve_singular(&op, c.powf(1.0 + delta) * beta, delta).unwrap();
        let sup = base.u_beta.sup_norm();
        let dev = scaled.u_beta.sup_diff(&base.u_beta.scaled(c));
        assert!(dev <= 1e-6 * sup.max(1.0) * c, "scaling deviation {dev:.3e}");
    }

    #[test]
    fn singular_residual_small() {
        let op = op_1d(256);
        let sol = solve_singular(&op, 1.0, 0.5).unwrap();
        assert!(sol.residual_norm <= 1e-8, "residual {:.3e}", sol.residual_norm);
        assert!(sol.u_beta.min_interior(op.grid()) > 0.0);
    }

    #[test]
    fn beta_star_cases() {
        let params: ModelParams<f64> =
            ModelParams::new(0.0, 0.1, 0.5, 1.5, 1.0, 0.0, 0.1, GKind::ConstantOne).unwrap();
        assert!(beta_star_estimate(&params, 9.87).unwrap().is_infinite());
        assert!(beta_star_estimate(&params, 0.0).is_err());

        // large-domain regime: finite threshold below the cap
        let params50: ModelParams<f64> =
            ModelParams::new(50.0, 0.1, 0.5, 1.5, 1.0, 0.0, 0.1, GKind::ConstantOne).unwrap();
        let lambda1 = 9e-4;
        let bstar = beta_star_estimate(&params50, lambda1).unwrap();
        assert!(bstar.is_finite());
        // dense 2-D scan oracle over (beta, t)
        let mut best = 0.0f64;
        for i in 0..4000 {
            let t = 1e-6f64 * (1e12f64).powf(i as f64 / 3999.0);
            let slack = lambda1 * t - 50.0;
            if slack > 0.0 {
                best = best.max(slack * t.powf(0.5));
            }
        }
        assert!(
            (bstar - best).abs() / best < 0.01,
            "bisection {bstar:.4e} vs scan {best:.4e}"
        );
    }

    #[test]
    fn barrier_properties() {
        let op = op_1d(128);
        let grid = op.grid();
        let sol = solve_singular(&op, 0.4, 0.5).unwrap();
        let ctx = CutoffContext::new(grid, sol.u_beta.clone(), 0.5).unwrap();

        // lambda = 0: v0 coincides with u_beta (same right-hand side)
        let params0 =
            ModelParams::new(0.0, 0.4, 0.5, 1.5, 1.0, 0.0, 0.1, GKind::ConstantOne).unwrap();
        let v0 = barrier_v0(&op, &params0, &ctx, 1.0).unwrap();
        let dev = v0.sup_diff(&sol.u_beta);
        assert!(dev <= 1e-7 * sol.u_beta.sup_norm().max(1e-30), "dev {dev:.3e}");

        // monotone in A0
        let params =
            ModelParams::new(2.0, 0.4, 0.5, 1.5, 1.0, 0.0, 0.1, GKind::ConstantOne).unwrap();
        let va = barrier_v0(&op, &params, &ctx, 1.0).unwrap();
        let vb = barrier_v0(&op, &params, &ctx, 2.0).unwrap();
        for j in 0..grid.num_nodes() {
            assert!(vb.values[j] >= va.values[j] - 1e-12);
        }

        // Euclidean constant rhs c: quadratic profile to solver accuracy
        let params_c =
            ModelParams::new(3.0, 0.0, 0.5, 1.5, 1.0, 0.0, 0.1, GKind::ConstantOne).unwrap();
        let ctx0 = CutoffContext::inactive(grid);
        let v = barrier_v0(&op, &params_c, &ctx0, 1.0).unwrap();
        let mut x = [0.0];
        for j in 0..grid.num_nodes() {
            grid.node_coords(j, &mut x);
            let exact = 3.0 * x[0] * (1.0 - x[0]) / 2.0;
            assert!((v.values[j] - exact).abs() <= 1e-8);
        }
    }
}
