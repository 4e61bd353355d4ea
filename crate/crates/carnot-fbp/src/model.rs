//! Nonlinearity, mollifier pair, singular cutoff and the regularized
//! energies with their first variation.
//!
//! The mollifier primitive `B` is the quintic smoothstep
//! `6 s^5 - 15 s^4 + 10 s^3` clamped outside `[0,1]`; its derivative
//! `30 s^2 (1-s)^2` has unit mass on `[0,1]` and range `[0, 15/8]`, inside
//! the required `[0,2]` band. C^2 regularity at the junctions is enough for
//! every solver in the crate.

use crate::error::{Error, Result};
use crate::geometry::{Grid, ScalarField};
use crate::linalg::pairwise;
use crate::operators::SubLaplacian;
use crate::Real;

/// Shape of the nonlinearity `g(x, s)`; all shipped kinds are x-free.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GKind {
    /// `g = 1` (the Prandtl-Batchelor case).
    ConstantOne,
    /// `g = s^{p-1}`.
    Power,
    /// `g = a0 + a1 s^{p-1}`.
    AffinePower,
}

/// Problem parameters. `a0`, `a1` are the growth constants of the bound
/// `g(x,s) <= a0 + a1 s^{p-1}`; the paper's name collision between the
/// growth constants and the singular strength/mollifier is resolved by the
/// `a0/a1` naming.
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    pub lambda: T,
    pub beta: T,
    pub delta: T,
    pub p: T,
    pub a0: T,
    pub a1: T,
    pub epsilon: T,
    pub g_kind: GKind,
    /// Cached `int_0^eps B(t/eps) t^{p-1} dt` for the power tail.
    power_eps_integral: T,
}

impl<T: Real> ModelParams<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lambda: T,
        beta: T,
        delta: T,
        p: T,
        a0: T,
        a1: T,
        epsilon: T,
        g_kind: GKind,
    ) -> Result<Self> {
        if !(delta > T::zero() && delta < T::one()) {
            return Err(Error::invalid(format!(
                "delta out of range: expected 0 < delta < 1, got {delta}"
            )));
        }
        if !(p > T::one() && p < T::from_f64(2.0)) {
            return Err(Error::invalid(format!("p out of range: expected 1 < p < 2, got {p}")));
        }
        if !(epsilon > T::zero()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if lambda < T::zero() || beta < T::zero() || a0 < T::zero() || a1 < T::zero() {
            return Err(Error::invalid(
                "lambda, beta, a0, a1 must all be nonnegative".to_string(),
            ));
        }
        match g_kind {
            GKind::ConstantOne => {
                if a0 < T::one() {
                    return Err(Error::invalid(
                        "g = 1 requires growth constant a0 >= 1".to_string(),
                    ));
                }
            }
            GKind::Power => {
                if a1 < T::one() {
                    return Err(Error::invalid(
                        "g = s^(p-1) requires growth constant a1 >= 1".to_string(),
                    ));
                }
            }
            GKind::AffinePower => {}
        }
        let mut params = ModelParams {
            lambda,
            beta,
            delta,
            p,
            a0,
            a1,
            epsilon,
            g_kind,
            power_eps_integral: T::zero(),
        };
        params.refresh_cache();
        Ok(params)
    }

    /// Same parameters at a different regularization scale.
    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        ModelParams::new(
            self.lambda, self.beta, self.delta, self.p, self.a0, self.a1, epsilon, self.g_kind,
        )
    }

    fn refresh_cache(&mut self) {
        self.power_eps_integral = match self.g_kind {
            GKind::ConstantOne => T::zero(),
            GKind::Power | GKind::AffinePower => {
                let eps = self.epsilon;
                let p = self.p;
                let tol = T::from_f64(1e-15) * eps.powf(p).max(T::from_f64(1e-30));
                adaptive_simpson(
                    &|t: T| eval_b(t / eps) * t.powf(p - T::one()),
                    T::zero(),
                    eps,
                    tol,
                )
            }
        };
    }

    /// True when `g(x, 0) > 0`, i.e. (g2) holds including at s = 0.
    pub fn g_positive_at_zero(&self) -> bool {
        match self.g_kind {
            GKind::ConstantOne => true,
            GKind::Power => false,
            GKind::AffinePower => self.a0 > T::zero(),
        }
    }

    /// `g(s)` for `s >= 0`; negative `s` is rejected.
    pub fn g_eval(&self, s: T) -> Result<T> {
        if s < T::zero() {
            return Err(Error::invalid(format!("g is only defined for s >= 0, got {s}")));
        }
        Ok(self.g(s))
    }

    #[inline]
    pub(crate) fn g(&self, s: T) -> T {
        match self.g_kind {
            GKind::ConstantOne => T::one(),
            GKind::Power => s.powf(self.p - T::one()),
            GKind::AffinePower => self.a0 + self.a1 * s.powf(self.p - T::one()),
        }
    }

    #[inline]
    fn g_deriv(&self, s: T) -> T {
        let pm1 = self.p - T::one();
        match self.g_kind {
            GKind::ConstantOne => T::zero(),
            GKind::Power => {
                if s > T::zero() {
                    pm1 * s.powf(pm1 - T::one())
                } else {
                    T::zero()
                }
            }
            GKind::AffinePower => {
                if s > T::zero() {
                    self.a1 * pm1 * s.powf(pm1 - T::one())
                } else {
                    T::zero()
                }
            }
        }
    }

    /// `G(s) = int_0^s g`.
    pub fn big_g(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        match self.g_kind {
            GKind::ConstantOne => s,
            GKind::Power => s.powf(self.p) / self.p,
            GKind::AffinePower => self.a0 * s + self.a1 * s.powf(self.p) / self.p,
        }
    }

    /// `g_eps(s) = B(s/eps) g(s)` for `s >= 0`.
    #[inline]
    pub fn g_eps(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        eval_b(s / self.epsilon) * self.g(s)
    }

    #[inline]
    pub(crate) fn g_eps_deriv(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        let eps = self.epsilon;
        eval_mollifier(s / eps) / eps * self.g(s) + eval_b(s / eps) * self.g_deriv(s)
    }

    /// `G_eps(s) = int_0^s g_eps`, in closed form where available.
    pub fn big_g_eps(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        let eps = self.epsilon;
        let const_part = |scale: T| scale * eps * int_b(s / eps);
        let power_part = |scale: T| {
            if s >= eps {
                scale * (self.power_eps_integral + (s.powf(self.p) - eps.powf(self.p)) / self.p)
            } else {
                let tol = T::from_f64(1e-15) * s.powf(self.p).max(T::from_f64(1e-30));
                scale * adaptive_simpson(&|t: T| eval_b(t / eps) * t.powf(self.p - T::one()), T::zero(), s, tol)
            }
        };
        match self.g_kind {
            GKind::ConstantOne => const_part(T::one()),
            GKind::Power => power_part(T::one()),
            GKind::AffinePower => const_part(self.a0) + power_part(self.a1),
        }
    }

    /// Pointwise infimum of `g(x, s)` over the domain (x-free kinds: `g`).
    pub fn g_min(&self, s: T) -> T {
        self.g(s.max(T::zero()))
    }
}

/// Quintic smoothstep: 0 below 0, 1 above 1, `6s^5 - 15s^4 + 10s^3` between.
#[inline]
pub fn eval_b<T: Real>(s: T) -> T {
    if s <= T::zero() {
        T::zero()
    } else if s >= T::one() {
        T::one()
    } else {
        let c10 = T::from_f64(10.0);
        let c15 = T::from_f64(15.0);
        let c6 = T::from_f64(6.0);
        s * s * s * (c10 - c15 * s + c6 * s * s)
    }
}

/// Mollifier `B'`: `30 s^2 (1-s)^2` on `[0,1]`, zero outside; unit mass,
/// bounded by 15/8.
#[inline]
pub fn eval_mollifier<T: Real>(s: T) -> T {
    if s <= T::zero() || s >= T::one() {
        T::zero()
    } else {
        let t = T::one() - s;
        T::from_f64(30.0) * s * s * t * t
    }
}

/// Derivative of the mollifier, `60 s (1-s)(1-2s)` on `[0,1]`.
#[inline]
pub fn eval_mollifier_deriv<T: Real>(s: T) -> T {
    if s <= T::zero() || s >= T::one() {
        T::zero()
    } else {
        T::from_f64(60.0) * s * (T::one() - s) * (T::one() - (s + s))
    }
}

/// `int_0^y B`, closed form.
#[inline]
pub fn int_b<T: Real>(y: T) -> T {
    if y <= T::zero() {
        T::zero()
    } else if y >= T::one() {
        T::from_f64(0.5) + (y - T::one())
    } else {
        let y4 = y * y * y * y;
        y4 * (T::from_f64(2.5) - T::from_f64(3.0) * y + y * y)
    }
}

fn adaptive_simpson<T: Real>(f: &dyn Fn(T) -> T, a: T, b: T, tol: T) -> T {
    fn simpson<T: Real>(fa: T, fm: T, fb: T, h: T) -> T {
        h / T::from_f64(6.0) * (fa + T::from_f64(4.0) * fm + fb)
    }
    fn rec<T: Real>(
        f: &dyn Fn(T) -> T,
        a: T,
        b: T,
        fa: T,
        fm: T,
        fb: T,
        whole: T,
        tol: T,
        depth: usize,
    ) -> T {
        let m = (a + b) * T::from_f64(0.5);
        let lm = (a + m) * T::from_f64(0.5);
        let rm = (m + b) * T::from_f64(0.5);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= T::from_f64(15.0) * tol {
            left + right + err / T::from_f64(15.0)
        } else {
            let half_tol = tol * T::from_f64(0.5);
            rec(f, a, m, fa, flm, fm, left, half_tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, half_tol, depth - 1)
        }
    }
    if b <= a {
        return T::zero();
    }
    let fa = f(a);
    let m = (a + b) * T::from_f64(0.5);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    rec(f, a, b, fa, fm, fb, whole, tol.max(T::from_f64(1e-300)), 28)
}

/// Singular cutoff data: the auxiliary solution `u_beta` and the cached
/// plateau `u_beta^{-delta}`. Where `u_beta` vanishes (the Dirichlet layer)
/// the cutoff is inactive and the plain power antiderivative is used, which
/// keeps every evaluation finite.
#[derive(Debug, Clone)]
pub struct CutoffContext<T> {
    pub u_beta: ScalarField<T>,
    pub delta: T,
    plateau: Vec<T>,
}

impl<T: Real> CutoffContext<T> {
    pub fn new(grid: &Grid<T>, u_beta: ScalarField<T>, delta: T) -> Result<Self> {
        if u_beta.len() != grid.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: grid.num_nodes(),
                got: u_beta.len(),
            });
        }
        for j in 0..u_beta.len() {
            if grid.is_interior(j) && !(u_beta.values[j] > T::zero()) {
                return Err(Error::PositivityViolation {
                    what: "cutoff context requires u_beta > 0 on interior nodes",
                    node: j,
                    value: u_beta.values[j].as_f64(),
                    dump: u_beta.values.iter().map(|v| v.as_f64()).collect(),
                });
            }
        }
        let plateau = u_beta
            .values
            .iter()
            .map(|&ub| if ub > T::zero() { ub.powf(-delta) } else { T::zero() })
            .collect();
        Ok(CutoffContext {
            u_beta,
            delta,
            plateau,
        })
    }

    /// Cutoff for a vanishing singular term (beta = 0): constant auxiliary
    /// field 1, plateau 1.
    pub fn inactive(grid: &Grid<T>) -> Self {
        let n = grid.num_nodes();
        CutoffContext {
            u_beta: ScalarField {
                values: vec![T::one(); n],
            },
            delta: T::from_f64(0.5),
            plateau: vec![T::one(); n],
        }
    }

    /// `phi_beta`: `u^{-delta}` above `u_beta`, frozen at the plateau below.
    #[inline]
    pub fn phi(&self, node: usize, u: T) -> T {
        let ub = self.u_beta.values[node];
        if u > ub {
            u.powf(-self.delta)
        } else {
            self.plateau[node]
        }
    }

    #[inline]
    pub(crate) fn phi_deriv(&self, node: usize, u: T) -> T {
        let ub = self.u_beta.values[node];
        if u > ub {
            -self.delta * u.powf(-self.delta - T::one())
        } else {
            T::zero()
        }
    }

    /// `Phi_beta(u) = int_0^u phi_beta`, closed form: linear on the plateau,
    /// power tail above `u_beta`.
    #[inline]
    pub fn big_phi(&self, node: usize, u: T) -> T {
        let ub = self.u_beta.values[node];
        if u <= ub {
            u * self.plateau[node]
        } else {
            let om = T::one() - self.delta;
            let ub_pow = ub.powf(om);
            ub_pow + (u.powf(om) - ub_pow) / om
        }
    }

    /// Haar integral of `u_beta^{1-delta}`; the exact offset the cutoff
    /// introduces between the plain power antiderivative and `Phi_beta` on
    /// fields above `u_beta`.
    pub fn cutoff_energy_offset(&self, grid: &Grid<T>) -> T {
        let om = T::one() - self.delta;
        let int = pairwise(grid.num_nodes(), |j| {
            let ub = self.u_beta.values[j];
            if ub > T::zero() {
                grid.haar_weight(j) * ub.powf(om)
            } else {
                T::zero()
            }
        });
        self.delta / om * int
    }
}

/// Spec-level free function: `phi_beta` at a node.
pub fn phi_beta<T: Real>(ctx: &CutoffContext<T>, node: usize, u_val: T) -> T {
    ctx.phi(node, u_val)
}

/// Node-level bulk integrand of `E_eps` (or of the truncated functional when
/// `cap` is finite): `Btilde - lambda*Gtilde - beta*Phi` at value `y`.
#[inline]
pub(crate) fn bulk_energy_node<T: Real>(
    params: &ModelParams<T>,
    ctx: &CutoffContext<T>,
    node: usize,
    y: T,
    cap: T,
) -> T {
    let eps = params.epsilon;
    let yc = y.min(cap);
    let mut b = eval_b((yc - T::one()) / eps);
    let mut g = params.big_g_eps(yc - T::one());
    if y > cap {
        let over = y - cap;
        b += over * eval_mollifier((cap - T::one()) / eps) / eps;
        g += over * params.g_eps(cap - T::one());
    }
    b - params.lambda * g - params.beta * ctx.big_phi(node, y)
}

/// Derivative of [`bulk_energy_node`] in `y`.
#[inline]
pub(crate) fn bulk_deriv_node<T: Real>(
    params: &ModelParams<T>,
    ctx: &CutoffContext<T>,
    node: usize,
    y: T,
    cap: T,
) -> T {
    let eps = params.epsilon;
    let yc = y.min(cap);
    eval_mollifier((yc - T::one()) / eps) / eps
        - params.lambda * params.g_eps(yc - T::one())
        - params.beta * ctx.phi(node, y)
}

/// Second derivative of [`bulk_energy_node`] in `y` (one-sided at kinks),
/// used by the Newton polish.
#[inline]
pub(crate) fn bulk_second_deriv_node<T: Real>(
    params: &ModelParams<T>,
    ctx: &CutoffContext<T>,
    node: usize,
    y: T,
    cap: T,
) -> T {
    let eps = params.epsilon;
    let mut h = -params.beta * ctx.phi_deriv(node, y);
    if y < cap {
        h += eval_mollifier_deriv((y - T::one()) / eps) / (eps * eps)
            - params.lambda * params.g_eps_deriv(y - T::one());
    }
    h
}

/// Exact (nondifferentiable) energy
/// `E(u) = 1/2 |grad u|^2 + int [chi_{u>1} - lambda G((u-1)_+)] - beta/(1-delta) int (u^+)^{1-delta}`.
pub fn energy_exact<T: Real>(
    op: &SubLaplacian<T>,
    params: &ModelParams<T>,
    u: &ScalarField<T>,
) -> T {
    let grid = op.grid();
    let om = T::one() - params.delta;
    let bulk = pairwise(grid.num_nodes(), |j| {
        let y = u.values[j];
        let chi = if y > T::one() { T::one() } else { T::zero() };
        let sing = if y > T::zero() { y.powf(om) } else { T::zero() };
        grid.haar_weight(j)
            * (chi - params.lambda * params.big_g((y - T::one()).max(T::zero()))
                - params.beta / om * sing)
    });
    T::from_f64(0.5) * op.h1_seminorm_sq(u) + bulk
}

/// Regularized energy `E_eps`.
pub fn energy_eps<T: Real>(
    op: &SubLaplacian<T>,
    params: &ModelParams<T>,
    ctx: &CutoffContext<T>,
    u: &ScalarField<T>,
) -> T {
    let grid = op.grid();
    let bulk = pairwise(grid.num_nodes(), |j| {
        grid.haar_weight(j) * bulk_energy_node(params, ctx, j, u.values[j], T::infinity())
    });
    T::from_f64(0.5) * op.h1_seminorm_sq(u) + bulk
}

/// Nodal gradient of `E_eps` with respect to interior values:
/// `A u + W [ (1/eps) mollifier((u-1)/eps) - lambda g_eps((u-1)_+) - beta phi_beta(u) ]`,
/// zero on boundary nodes.
pub fn residual_eps<T: Real>(
    op: &SubLaplacian<T>,
    params: &ModelParams<T>,
    ctx: &CutoffContext<T>,
    u: &ScalarField<T>,
    out: &mut ScalarField<T>,
) {
    let grid = op.grid();
    op.apply(&u.values, &mut out.values);
    for j in 0..grid.num_nodes() {
        if grid.is_interior(j) {
            out.values[j] +=
                grid.haar_weight(j) * bulk_deriv_node(params, ctx, j, u.values[j], T::infinity());
        } else {
            out.values[j] = T::zero();
        }
    }
}

/// Sup over interior nodes of the residual divided by the Haar weight (the
/// pointwise PDE residual scale).
pub fn residual_phys_sup<T: Real>(grid: &Grid<T>, r: &ScalarField<T>) -> T {
    let mut m = T::zero();
    for j in 0..grid.num_nodes() {
        if grid.is_interior(j) {
            m = m.max((r.values[j] / grid.haar_weight(j)).abs());
        }
    }
    m
}

/// Haar measure of the band `{ |u - level| <= half_width }`.
pub fn level_band_measure<T: Real>(grid: &Grid<T>, u: &ScalarField<T>, level: T, half_width: T) -> T {
    pairwise(grid.num_nodes(), |j| {
        if (u.values[j] - level).abs() <= half_width {
            grid.haar_weight(j)
        } else {
            T::zero()
        }
    })
}

/// Haar measure of `{ u > level }`.
pub fn super_level_measure<T: Real>(grid: &Grid<T>, u: &ScalarField<T>, level: T) -> T {
    pairwise(grid.num_nodes(), |j| {
        if u.values[j] > level {
            grid.haar_weight(j)
        } else {
            T::zero()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GroupModel;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn params_const(lambda: f64, beta: f64, eps: f64) -> ModelParams<f64> {
        ModelParams::new(lambda, beta, 0.5, 1.5, 1.0, 0.0, eps, GKind::ConstantOne).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1.0, 0.1, 1.5, 1.5, 1.0, 0.0, 0.1, GKind::ConstantOne).is_err());
        assert!(ModelParams::new(1.0, 0.1, 0.5, 2.5, 1.0, 0.0, 0.1, GKind::ConstantOne).is_err());
        assert!(ModelParams::new(1.0, 0.1, 0.5, 1.5, 1.0, 0.0, 0.0, GKind::ConstantOne).is_err());
        assert!(ModelParams::new(1.0, 0.1, 0.5, 1.5, 0.5, 0.0, 0.1, GKind::ConstantOne).is_err());
        assert!(ModelParams::new(1.0, 0.1, 0.5, 1.5, 0.0, 1.0, 0.1, GKind::Power).is_ok());
        assert!(ModelParams::new(1.0, 0.1, 0.5, 1.5, 0.0, 0.5, 0.1, GKind::Power).is_err());
    }

    #[test]
    fn smoothstep_values() {
        assert_eq!(eval_b(-3.0), 0.0);
        assert_eq!(eval_b(2.0), 1.0);
        assert_relative_eq!(eval_b(0.5), 0.5, max_relative = 1e-15);
        assert_relative_eq!(eval_mollifier(0.5), 1.875, max_relative = 1e-15);
    }

    #[test]
    fn mollifier_mass_and_bounds() {
        // composite Simpson on [0,1]
        let n = 4096;
        let h = 1.0 / n as f64;
        let mut s = eval_mollifier(0.0) + eval_mollifier(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * eval_mollifier(i as f64 * h);
        }
        s *= h / 3.0;
        assert!((s - 1.0).abs() <= 1e-10, "mass {s}");

        let mut prev = f64::NEG_INFINITY;
        for i in 0..=10_000 {
            let x = -1.0 + 3.0 * i as f64 / 10_000.0;
            let b = eval_b(x);
            assert!(b >= prev - 1e-15, "B not nondecreasing at {x}");
            prev = b;
            let m = eval_mollifier(x);
            assert!((0.0..=2.0).contains(&m), "mollifier out of [0,2] at {x}");
        }
    }

    #[test]
    fn int_b_matches_quadrature() {
        for y in [0.3, 0.7, 1.0, 2.5] {
            let n = 20_000;
            let h = y / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                s += h * 0.5 * (eval_b(i as f64 * h) + eval_b((i + 1) as f64 * h));
            }
            assert_relative_eq!(int_b(y), s, max_relative = 1e-8);
        }
    }

    fn test_ctx(grid: &Grid<f64>, ub: f64) -> CutoffContext<f64> {
        let field = ScalarField {
            values: vec![ub; grid.num_nodes()],
        };
        CutoffContext::new(grid, field, 0.5).unwrap()
    }

    #[test]
    fn phi_beta_branches() {
        let grid: Grid<f64> = Grid::unit_box(1, 9).unwrap();
        let ctx = test_ctx(&grid, 1.0);
        assert_relative_eq!(ctx.phi(4, 4.0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(ctx.phi(4, 0.3), 1.0, max_relative = 1e-15);
        // continuity at the junction
        let lo = ctx.phi(4, 1.0 - 1e-9);
        let hi = ctx.phi(4, 1.0 + 1e-9);
        assert!((hi - lo).abs() / lo.abs() <= 1e-6);
    }

    #[test]
    fn big_phi_closed_form() {
        let grid: Grid<f64> = Grid::unit_box(1, 9).unwrap();
        let ctx = test_ctx(&grid, 0.3);
        // below the plateau edge: linear
        assert_relative_eq!(ctx.big_phi(4, 0.2), 0.2 * 0.3f64.powf(-0.5), max_relative = 1e-14);
        // above: plateau part + power tail, cross-check by quadrature
        let u = 0.9;
        let n = 200_000;
        let h = u / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let t0 = i as f64 * h + h * 0.5;
            s += h * ctx.phi(4, t0);
        }
        assert_relative_eq!(ctx.big_phi(4, u), s, max_relative = 1e-8);
    }

    #[test]
    fn g_eps_examples() {
        let p = params_const(1.0, 0.1, 0.25);
        assert_eq!(p.g_eps(0.0), 0.0);
        assert_eq!(p.big_g_eps(0.0), 0.0);
        // for s >= eps under the quintic B: G_eps(s) = s - eps/2
        for s in [0.25, 0.5, 2.0] {
            assert_relative_eq!(p.big_g_eps(s), s - 0.125, max_relative = 1e-13);
        }
        assert!(p.g_eval(-0.1).is_err());

        let pw: ModelParams<f64> =
            ModelParams::new(1.0, 0.1, 0.5, 1.5, 0.0, 1.0, 0.1, GKind::Power).unwrap();
        let s: f64 = 30.0;
        assert_relative_eq!(pw.g_eps(s), s.powf(0.5), max_relative = 1e-14);
    }

    #[test]
    fn big_g_eps_power_matches_quadrature() {
        let pw: ModelParams<f64> =
            ModelParams::new(1.0, 0.1, 0.5, 1.5, 0.0, 1.0, 0.2, GKind::Power).unwrap();
        for s in [0.05, 0.15, 0.2, 0.5, 1.3] {
            let n = 400_000;
            let h = s / n as f64;
            let mut q = 0.0;
            for i in 0..n {
                let t = i as f64 * h + 0.5 * h;
                q += h * pw.g_eps(t);
            }
            assert_relative_eq!(pw.big_g_eps(s), q, max_relative = 1e-7);
        }
    }

    fn setup_1d(n: usize) -> (GroupModel, Grid<f64>, SubLaplacian<f64>) {
        let g = GroupModel::euclidean(1).unwrap();
        let grid = Grid::unit_box(1, n).unwrap();
        let op = SubLaplacian::new(&g, &grid).unwrap();
        (g, grid, op)
    }

    #[test]
    fn energy_zero_field() {
        let (_, grid, op) = setup_1d(65);
        let params = params_const(3.0, 0.2, 0.1);
        let ctx = test_ctx(&grid, 0.05);
        let zero = ScalarField::zeros(&grid);
        assert_eq!(energy_exact(&op, &params, &zero), 0.0);
        assert_eq!(energy_eps(&op, &params, &ctx, &zero), 0.0);
    }

    #[test]
    fn energy_exact_constant_half() {
        let (_, grid, op) = setup_1d(33);
        let params = params_const(2.0, 0.3, 0.1);
        let u = ScalarField::constant_interior(&grid, 0.5);
        // independent hand quadrature on the same mesh
        let mut expected = 0.0;
        for j in 0..grid.num_nodes() {
            let y: f64 = u.values[j];
            let sing = if y > 0.0 { y.powf(0.5) } else { 0.0 };
            expected += grid.haar_weight(j) * (-params.beta / 0.5 * sing);
        }
        // boundary-layer gradient: jump 0 -> 1/2 over the first and last cell
        let h = grid.spacing()[0];
        expected += 2.0 * 0.5 * h * (0.5 / h) * (0.5 / h);
        assert_relative_eq!(energy_exact(&op, &params, &u), expected, max_relative = 1e-12);
    }

    #[test]
    fn energy_exact_constant_above_one() {
        let (_, grid, op) = setup_1d(33);
        let params = params_const(2.0, 0.3, 0.1);
        let c = 1.5;
        let u = ScalarField::constant_interior(&grid, c);
        let mut expected = 0.0;
        for j in 0..grid.num_nodes() {
            if grid.is_interior(j) {
                let w = grid.haar_weight(j);
                expected += w * (1.0 - params.lambda * (c - 1.0) - params.beta / 0.5 * c.powf(0.5));
            }
        }
        let h = grid.spacing()[0];
        expected += 2.0 * 0.5 * h * (c / h) * (c / h);
        assert_relative_eq!(energy_exact(&op, &params, &u), expected, max_relative = 1e-12);
    }

    #[test]
    fn residual_at_zero_is_minus_beta_plateau() {
        let (_, grid, op) = setup_1d(17);
        let params = params_const(0.0, 0.4, 0.1);
        let ctx = test_ctx(&grid, 0.2);
        let zero = ScalarField::zeros(&grid);
        let mut r = ScalarField::zeros(&grid);
        residual_eps(&op, &params, &ctx, &zero, &mut r);
        for j in 0..grid.num_nodes() {
            if grid.is_interior(j) {
                let expected = -grid.haar_weight(j) * params.beta * 0.2f64.powf(-0.5);
                assert_relative_eq!(r.values[j], expected, max_relative = 1e-13);
            } else {
                assert_eq!(r.values[j], 0.0);
            }
        }
    }

    #[test]
    fn residual_is_gradient_of_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (_, grid, op) = setup_1d(41);
        let mut ub = ScalarField::from_fn_dirichlet(&grid, |x| 0.1 * x[0] * (1.0 - x[0]) + 0.02);
        ub.project_dirichlet(&grid);
        let ctx = CutoffContext::new(&grid, ub, 0.5).unwrap();
        for (lambda, beta, eps, kind) in [
            (3.0, 0.2, 0.2, GKind::ConstantOne),
            (5.0, 0.1, 0.05, GKind::ConstantOne),
            (2.0, 0.3, 0.1, GKind::AffinePower),
        ] {
            let params = ModelParams::new(lambda, beta, 0.5, 1.5, 1.0, 0.5, eps, kind).unwrap();
            for _ in 0..5 {
                let mut u = ScalarField::zeros(&grid);
                let mut v = ScalarField::zeros(&grid);
                for j in 0..grid.num_nodes() {
                    if grid.is_interior(j) {
                        u.values[j] = rng.gen_range(0.0..2.0);
                        v.values[j] = rng.gen_range(-1.0..1.0);
                    }
                }
                let mut r = ScalarField::zeros(&grid);
                residual_eps(&op, &params, &ctx, &u, &mut r);
                let rv = crate::linalg::dot(&r.values, &v.values);

                let t = 1e-5;
                let mut up = u.clone();
                let mut um = u.clone();
                for j in 0..grid.num_nodes() {
                    up.values[j] += t * v.values[j];
                    um.values[j] -= t * v.values[j];
                }
                let fd = (energy_eps(&op, &params, &ctx, &up) - energy_eps(&op, &params, &ctx, &um))
                    / (2.0 * t);
                assert!(
                    (fd - rv).abs() <= 1e-6 * rv.abs().max(fd.abs()).max(1e-12),
                    "kind {kind:?}: fd {fd:.12e} vs <r,v> {rv:.12e}"
                );
            }
        }
    }

    #[test]
    fn eps_energy_gap_within_bounds() {
        // E_eps(u) - E(u) in [-H{1<u<1+eps}, lambda(a0 eps + a1 eps^p / p) vol + cutoff offset]
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, grid, op) = setup_1d(65);
        let params = params_const(4.0, 0.3, 0.15);
        let ub = ScalarField::from_fn_dirichlet(&grid, |x| 0.05 * x[0] * (1.0 - x[0]) + 0.01);
        let ctx = CutoffContext::new(&grid, ub, 0.5).unwrap();
        let offset = ctx.cutoff_energy_offset(&grid);
        let vol = grid.box_volume();
        for _ in 0..10 {
            let mut u = ScalarField::zeros(&grid);
            for j in 0..grid.num_nodes() {
                if grid.is_interior(j) {
                    u.values[j] = rng.gen_range(0.0..2.5);
                }
            }
            let gap = energy_eps(&op, &params, &ctx, &u) - energy_exact(&op, &params, &u);
            let band = pairwise(grid.num_nodes(), |j| {
                let y = u.values[j];
                if y > 1.0 && y < 1.0 + params.epsilon {
                    grid.haar_weight(j)
                } else {
                    0.0
                }
            });
            let upper = params.lambda * params.a0 * params.epsilon * vol + offset + 1e-12;
            assert!(gap >= -band - 1e-12, "gap {gap} below -band {band}");
            assert!(gap <= upper, "gap {gap} above {upper}");
        }
    }

    #[test]
    fn bulk_monotone_for_large_constants() {
        let (_, grid, op) = setup_1d(33);
        let params = params_const(2.0, 0.3, 0.1);
        let ctx = test_ctx(&grid, 0.1);
        let bulk_of = |c: f64| {
            let u = ScalarField::constant_interior(&grid, c);
            energy_eps(&op, &params, &ctx, &u) - 0.5 * op.h1_seminorm_sq(&u)
        };
        let mut prev = bulk_of(1.0 + params.epsilon);
        for i in 1..=10 {
            let c = 1.0 + params.epsilon + 0.3 * i as f64;
            let cur = bulk_of(c);
            assert!(cur <= prev + 1e-12, "bulk not nonincreasing at c={c}");
            prev = cur;
        }
    }
}
