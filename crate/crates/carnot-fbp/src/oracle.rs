//! Independent 1-D references: a two-point BVP shooting solver for the
//! singular auxiliary problem and for the free boundary problem itself, plus
//! dense scan utilities.
//!
//! The oracle is deliberately a different method from the grid solvers
//! (shooting and phase-plane matching instead of variational descent), so
//! agreement between the two is evidence rather than tautology. Both
//! problems are solved on the half interval with a symmetric mirror: the
//! free boundary jump `(u'^+)^2 - (u'^-)^2 = 2` is enforced exactly at the
//! detected crossing, which makes it the matching condition.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::Real;

/// Nodal profile on a uniform grid over `[0, length]`.
#[derive(Debug, Clone)]
pub struct Profile<T> {
    pub x: Vec<T>,
    pub u: Vec<T>,
}

impl<T: Real> Profile<T> {
    pub fn max(&self) -> T {
        self.u.iter().fold(T::zero(), |m, &v| m.max(v))
    }

    pub fn sup_diff(&self, other: &Profile<T>) -> T {
        self.u
            .iter()
            .zip(&other.u)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// 1-D desk-scale reduction of the free boundary problem: interval,
/// parameters, matching level 1 and jump constant 2.
#[derive(Debug, Clone)]
pub struct ShootingProblem<T> {
    pub length: T,
    pub params: ModelParams<T>,
    pub n: usize,
    /// RK4 substeps per output cell; doubled by the Richardson self-check.
    pub substeps: usize,
}

impl<T: Real> ShootingProblem<T> {
    pub fn new(length: T, params: ModelParams<T>, n: usize) -> Result<Self> {
        if !(length > T::zero()) {
            return Err(Error::invalid(format!("interval length must be positive, got {length}")));
        }
        if n < 1000 {
            return Err(Error::invalid(format!(
                "shooting oracle requires n >= 1000 nodes, got {n}"
            )));
        }
        Ok(ShootingProblem {
            length,
            params,
            n,
            substeps: 8,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct State<T> {
    x: T,
    u: T,
    v: T,
}

/// One RK4 step for `u'' = f(u)`.
#[inline]
fn rk4_step<T: Real>(s: State<T>, h: T, f: &(impl Fn(T) -> T + ?Sized)) -> State<T> {
    let half = T::from_f64(0.5);
    let k1u = s.v;
    let k1v = f(s.u);
    let k2u = s.v + half * h * k1v;
    let k2v = f(s.u + half * h * k1u);
    let k3u = s.v + half * h * k2v;
    let k3v = f(s.u + half * h * k2u);
    let k4u = s.v + h * k3v;
    let k4v = f(s.u + h * k3u);
    let six = T::from_f64(6.0);
    State {
        x: s.x + h,
        u: s.u + h / six * (k1u + (k2u + k3u) * T::from_f64(2.0) + k4u),
        v: s.v + h / six * (k1v + (k2v + k3v) * T::from_f64(2.0) + k4v),
    }
}

/// Series start for `u'' = -beta u^{-delta}` near the Dirichlet endpoint:
/// `u = s x - beta s^{-delta} x^{2-delta} / ((1-delta)(2-delta))`.
fn series_state<T: Real>(slope: T, beta: T, delta: T, x0: T) -> State<T> {
    let om = T::one() - delta;
    let c = beta * slope.powf(-delta) / (om * (T::from_f64(2.0) - delta));
    State {
        x: x0,
        u: slope * x0 - c * x0.powf(T::from_f64(2.0) - delta),
        v: slope - c * (T::from_f64(2.0) - delta) * x0.powf(om),
    }
}

/// Integrate `u'' = -beta u^{-delta}` from the series start at `x0` to
/// `x_end`, stepping exactly onto the output nodes in `record`; returns the
/// final state or None if `u` dropped to zero on the way.
#[allow(clippy::too_many_arguments)]
fn integrate_singular<T: Real>(
    slope: T,
    beta: T,
    delta: T,
    x_end: T,
    node_spacing: T,
    substeps: usize,
    mut record: impl FnMut(usize, T),
) -> Option<State<T>> {
    let f = move |u: T| -> T {
        if u <= T::zero() {
            T::zero()
        } else {
            -beta * u.powf(-delta)
        }
    };
    let x0 = node_spacing * T::from_f64(1e-8);
    let mut s = series_state(slope, beta, delta, x0);
    record(0, T::zero());

    // geometric ramp through the first cell
    let mut step = x0;
    while s.x < node_spacing {
        let h = step.min(node_spacing - s.x);
        s = rk4_step(s, h, &f);
        if s.u <= T::zero() {
            return None;
        }
        step = step + step;
    }

    let sub = T::from_usize(substeps);
    let mut node = 1usize;
    loop {
        let x_node = node_spacing * T::from_usize(node);
        if x_node > x_end + node_spacing * T::from_f64(0.5) {
            break;
        }
        let target = x_node.min(x_end);
        let h = (target - s.x) / sub;
        for _ in 0..substeps {
            s = rk4_step(s, h, &f);
            if s.u <= T::zero() {
                return None;
            }
        }
        if (s.x - x_node).abs() < node_spacing * T::from_f64(1e-12) {
            record(node, s.u);
        }
        if target >= x_end {
            break;
        }
        node += 1;
    }
    // partial step up to x_end when x_end is not a node (even n)
    if s.x < x_end {
        let h = (x_end - s.x) / sub;
        for _ in 0..substeps {
            s = rk4_step(s, h, &f);
            if s.u <= T::zero() {
                return None;
            }
        }
    }
    Some(s)
}

/// Solution of the singular auxiliary BVP by bisection on the initial slope.
#[derive(Debug, Clone)]
pub struct SingularShot<T> {
    pub profile: Profile<T>,
    pub slope0: T,
    pub iterations: usize,
}

/// Solve `-u'' = beta u^{-delta}, u(0) = u(L) = 0` on `n` nodes by shooting:
/// the symmetric profile is integrated to `L/2`, the initial slope bisected
/// on `u'(L/2) = 0`, and the right half mirrored.
pub fn shoot_singular<T: Real>(
    beta: T,
    delta: T,
    n: usize,
    length: T,
) -> Result<SingularShot<T>> {
    shoot_singular_with(beta, delta, n, length, 8)
}

pub fn shoot_singular_with<T: Real>(
    beta: T,
    delta: T,
    n: usize,
    length: T,
    substeps: usize,
) -> Result<SingularShot<T>> {
    if n < 1000 {
        return Err(Error::invalid(format!(
            "shoot_singular requires n >= 1000, got {n}"
        )));
    }
    if !(beta > T::zero()) || !(delta > T::zero() && delta < T::one()) {
        return Err(Error::invalid(
            "shoot_singular requires beta > 0 and 0 < delta < 1".to_string(),
        ));
    }
    let h = length / T::from_usize(n - 1);
    let half_l = length * T::from_f64(0.5);
    let sink = |_: usize, _: T| {};
    let shoot = |slope: T| -> Option<T> {
        integrate_singular(slope, beta, delta, half_l, h, substeps, sink).map(|s| s.v)
    };

    // bracket: small slopes fall to zero, large slopes keep v > 0
    let mut lo = T::from_f64(1e-8);
    let mut hi = T::from_f64(1.0).max(beta);
    let mut grow = 0;
    while shoot(hi).map_or(true, |v| v < T::zero()) {
        hi = hi + hi;
        grow += 1;
        if grow > 200 {
            return Err(Error::NoSolution(
                "singular shooting: no upper slope bracket".to_string(),
            ));
        }
    }
    while shoot(lo).is_some_and(|v| v > T::zero()) {
        lo = lo * T::from_f64(0.5);
        grow += 1;
        if grow > 400 {
            return Err(Error::NoSolution(
                "singular shooting: no lower slope bracket".to_string(),
            ));
        }
    }
    let mut iterations = 0;
    for _ in 0..110 {
        iterations += 1;
        let mid = (lo + hi) * T::from_f64(0.5);
        match shoot(mid) {
            Some(v) if v > T::zero() => hi = mid,
            _ => lo = mid,
        }
        if (hi - lo) <= hi.abs() * T::from_f64(1e-15) {
            break;
        }
    }
    let slope = (lo + hi) * T::from_f64(0.5);

    let mut u = vec![T::zero(); n];
    let ok = integrate_singular(slope, beta, delta, half_l, h, substeps, |i, val| {
        u[i] = val;
    })
    .is_some();
    if !ok {
        return Err(Error::NoSolution(
            "singular shooting: converged slope fell to zero".to_string(),
        ));
    }
    for i in 0..n {
        if T::from_usize(i) * h > half_l {
            u[i] = u[n - 1 - i];
        }
    }
    let x = (0..n).map(|i| T::from_usize(i) * h).collect();
    Ok(SingularShot {
        profile: Profile { x, u },
        slope0: slope,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ShotClass {
    /// fell back to zero before the midpoint
    Fell,
    /// stayed below the level 1 up to the midpoint
    Low,
    /// crossed the level 1 (jump applied)
    Crossed,
}

#[derive(Debug, Clone, Copy)]
struct Shot<T> {
    class: ShotClass,
    /// `u'` at the stopping point (midpoint, or descending return to 1)
    f: T,
    crossing: T,
    slope_below: T,
    slope_above: T,
    peak: T,
}

/// Branch data of one matched free boundary solution.
#[derive(Debug, Clone)]
pub struct BranchInfo<T> {
    pub slope0: T,
    /// left crossing position of `{u = 1}`
    pub crossing: T,
    /// one-sided slopes at the crossing (below / above the level)
    pub slope_below: T,
    pub slope_above: T,
    pub peak: T,
    /// `|slope_above^2 - slope_below^2 - 2|`
    pub jump_deviation: T,
}

/// The matched pair of 1-D free boundary solutions.
#[derive(Debug, Clone)]
pub struct FreeBoundaryBranches<T> {
    /// stable branch (the wider bump, lower energy)
    pub u0: Profile<T>,
    /// unstable branch (the narrower bump)
    pub u1: Profile<T>,
    pub u0_info: BranchInfo<T>,
    pub u1_info: BranchInfo<T>,
}

struct FbIntegrator<'a, T> {
    params: &'a ModelParams<T>,
    half_l: T,
    node_spacing: T,
    substeps: usize,
}

impl<'a, T: Real> FbIntegrator<'a, T> {
    fn rhs_outer(&self) -> impl Fn(T) -> T + '_ {
        let beta = self.params.beta;
        let delta = self.params.delta;
        move |u: T| {
            if u <= T::zero() {
                T::zero()
            } else {
                -beta * u.powf(-delta)
            }
        }
    }

    fn rhs_inner(&self) -> impl Fn(T) -> T + '_ {
        let beta = self.params.beta;
        let delta = self.params.delta;
        let lambda = self.params.lambda;
        let params = self.params;
        move |u: T| {
            let s = (u - T::one()).max(T::zero());
            -(lambda * params.g(s) + beta * u.powf(-delta))
        }
    }

    /// Shoot with initial slope `slope`, applying the ascending jump at the
    /// detected crossing. Records node values when `record` is given.
    fn shoot(&self, slope: T, mut record: Option<&mut Vec<T>>) -> Shot<T> {
        let outer = self.rhs_outer();
        let inner = self.rhs_inner();
        let h = self.node_spacing;
        let x0 = h * T::from_f64(1e-8);
        let beta = self.params.beta;
        let delta = self.params.delta;
        let mut s = series_state(slope, beta, delta, x0);
        let mut crossed = false;
        let mut crossing = T::zero();
        let mut slope_below = T::zero();
        let mut slope_above = T::zero();
        if let Some(rec) = record.as_deref_mut() {
            rec[0] = T::zero();
        }

        let fell = |s: &State<T>| s.u <= T::zero();
        let mut fail = false;

        // geometric ramp through the first cell (u < 1 there for any
        // realistic slope; a crossing inside the first cell is handled in
        // the main loop because the ramp stops at the first node)
        let mut ramp = x0;
        while s.x < h {
            let step = ramp.min(h - s.x);
            s = rk4_step(s, step, &outer);
            if fell(&s) {
                fail = true;
                break;
            }
            ramp = ramp + ramp;
        }

        let sub = T::from_usize(self.substeps);
        let mut node = 1usize;
        let mut returned = false;
        'outer_loop: while !fail {
            let x_node = h * T::from_usize(node);
            let target = x_node.min(self.half_l);
            if s.x >= self.half_l - h * T::from_f64(1e-12) {
                break;
            }
            let step = (target - s.x) / sub;
            for _ in 0..self.substeps {
                let rhs: &dyn Fn(T) -> T = if crossed { &inner } else { &outer };
                let prev = s;
                s = rk4_step(s, step, rhs);
                if !crossed && prev.u < T::one() && s.u >= T::one() {
                    // locate the ascending crossing inside this substep
                    let mut t_lo = T::zero();
                    let mut t_hi = step;
                    for _ in 0..80 {
                        let mid = (t_lo + t_hi) * T::from_f64(0.5);
                        let trial = rk4_step(prev, mid, rhs);
                        if trial.u >= T::one() {
                            t_hi = mid;
                        } else {
                            t_lo = mid;
                        }
                    }
                    let at = rk4_step(prev, (t_lo + t_hi) * T::from_f64(0.5), rhs);
                    crossing = at.x;
                    slope_below = at.v;
                    slope_above = (at.v * at.v + T::from_f64(2.0)).sqrt();
                    crossed = true;
                    s = State {
                        x: at.x,
                        u: T::one(),
                        v: slope_above,
                    };
                    // finish the rest of this substep in the inner regime
                    let rest = prev.x + step - s.x;
                    s = rk4_step(s, rest, &inner);
                }
                if crossed && s.u < T::one() {
                    // descending return before the midpoint: stop; f = u'
                    returned = true;
                    break 'outer_loop;
                }
                if fell(&s) {
                    fail = true;
                    break 'outer_loop;
                }
            }
            if (s.x - x_node).abs() <= h * T::from_f64(1e-10) {
                if let Some(rec) = record.as_deref_mut() {
                    rec[node] = s.u;
                }
                node += 1;
            }
            if target >= self.half_l {
                break;
            }
        }

        let class = if fail {
            ShotClass::Fell
        } else if crossed {
            ShotClass::Crossed
        } else {
            ShotClass::Low
        };
        let f = if fail {
            T::from_f64(-1e30)
        } else if returned {
            // continuous continuation of u'(L/2) across the return boundary
            s.v - (T::one() - s.u)
        } else {
            s.v
        };
        Shot {
            class,
            f,
            crossing,
            slope_below,
            slope_above,
            peak: if fail { T::zero() } else { s.u },
        }
    }
}

/// Construct the two matched 1-D free boundary solutions by scanning the
/// initial slope, keeping the sign changes of `u'(L/2)` among shots that
/// crossed the level (the low branch root is the singular auxiliary
/// solution, not a free boundary solution).
pub fn shoot_free_boundary<T: Real>(
    problem: &ShootingProblem<T>,
) -> Result<FreeBoundaryBranches<T>> {
    let params = &problem.params;
    if !(params.beta > T::zero()) {
        return Err(Error::invalid(
            "shoot_free_boundary requires beta > 0".to_string(),
        ));
    }
    let n = problem.n;
    let h = problem.length / T::from_usize(n - 1);
    let integ = FbIntegrator {
        params,
        half_l: problem.length * T::from_f64(0.5),
        node_spacing: h,
        substeps: problem.substeps,
    };

    // scan slopes from just above the singular-branch slope upward
    let base = shoot_singular_with(params.beta, params.delta, n, problem.length, problem.substeps)?;
    let s_lo = base.slope0 * T::from_f64(1.0001);
    let mut s_hi = (base.slope0 + T::one()).max(T::from_f64(4.0) / problem.length);
    let mut guard = 0;
    loop {
        let shot = integ.shoot(s_hi, None);
        if shot.class == ShotClass::Crossed && shot.f > T::zero() {
            break;
        }
        s_hi = s_hi + s_hi;
        guard += 1;
        if guard > 60 {
            return Err(Error::GeometryFailure(
                "free boundary shooting: no positive-slope bracket (lambda too small?)".to_string(),
            ));
        }
    }

    let count = 256;
    let mut shots: Vec<(T, Shot<T>)> = Vec::with_capacity(count);
    for i in 0..count {
        let frac = T::from_usize(i) / T::from_usize(count - 1);
        let s = s_lo + (s_hi - s_lo) * frac;
        shots.push((s, integ.shoot(s, None)));
    }

    let mut roots: Vec<T> = Vec::new();
    for w in shots.windows(2) {
        let (sa, sha) = &w[0];
        let (sb, shb) = &w[1];
        if sha.class == ShotClass::Crossed
            && shb.class == ShotClass::Crossed
            && (sha.f <= T::zero()) != (shb.f <= T::zero())
        {
            let mut lo = *sa;
            let mut hi = *sb;
            let lo_sign = sha.f <= T::zero();
            for _ in 0..100 {
                let mid = (lo + hi) * T::from_f64(0.5);
                let sh = integ.shoot(mid, None);
                if (sh.f <= T::zero()) == lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push((lo + hi) * T::from_f64(0.5));
        }
    }

    if roots.len() != 2 {
        return Err(Error::GeometryFailure(format!(
            "free boundary shooting found {} matched branches (expected 2); lambda below the two-solution threshold?",
            roots.len()
        )));
    }

    let mut build = |slope: T| -> (Profile<T>, BranchInfo<T>) {
        let mut u = vec![T::zero(); n];
        let shot = integ.shoot(slope, Some(&mut u));
        for i in 0..n {
            if T::from_usize(i) * h > problem.length * T::from_f64(0.5) {
                u[i] = u[n - 1 - i];
            }
        }
        let x = (0..n).map(|i| T::from_usize(i) * h).collect();
        let dev = (shot.slope_above * shot.slope_above
            - shot.slope_below * shot.slope_below
            - T::from_f64(2.0))
        .abs();
        (
            Profile { x, u },
            BranchInfo {
                slope0: slope,
                crossing: shot.crossing,
                slope_below: shot.slope_below,
                slope_above: shot.slope_above,
                peak: shot.peak,
                jump_deviation: dev,
            },
        )
    };

    // the smaller initial slope gives the narrower (unstable) bump
    let (p1, i1) = build(roots[0]);
    let (p0, i0) = build(roots[1]);
    Ok(FreeBoundaryBranches {
        u0: p0,
        u1: p1,
        u0_info: i0,
        u1_info: i1,
    })
}

/// Exhaustive grid evaluation: maximum of `f` over a uniform grid.
pub fn dense_scan_max<T: Real>(lo: T, hi: T, count: usize, f: impl Fn(T) -> T) -> (T, T) {
    let mut best_x = lo;
    let mut best = f(lo);
    for i in 1..count {
        let x = lo + (hi - lo) * T::from_usize(i) / T::from_usize(count - 1);
        let v = f(x);
        if v > best {
            best = v;
            best_x = x;
        }
    }
    (best_x, best)
}

pub fn dense_scan_min<T: Real>(lo: T, hi: T, count: usize, f: impl Fn(T) -> T) -> (T, T) {
    let (x, v) = dense_scan_max(lo, hi, count, |t| -f(t));
    (x, -v)
}

/// Logarithmically spaced scan maximum (requires `lo, hi > 0`).
pub fn dense_scan_log_max<T: Real>(lo: T, hi: T, count: usize, f: impl Fn(T) -> T) -> (T, T) {
    let (lx, lv) = dense_scan_max(lo.ln(), hi.ln(), count, |t| f(t.exp()));
    (lx.exp(), lv)
}

/// Composite Simpson integral on a uniform grid with `count` panels
/// (rounded up to even).
pub fn integral_scan<T: Real>(lo: T, hi: T, count: usize, f: impl Fn(T) -> T) -> T {
    let n = if count % 2 == 0 { count } else { count + 1 };
    let h = (hi - lo) / T::from_usize(n);
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 {
            T::from_f64(4.0)
        } else {
            T::from_f64(2.0)
        };
        s += w * f(lo + h * T::from_usize(i));
    }
    s * h / T::from_f64(3.0)
}
