//! Energy minimization and the numerical mountain pass.
//!
//! The minimizer is a preconditioned nonlinear conjugate gradient (Polak-
//! Ribiere with restarts) with Armijo backtracking; each iteration costs one
//! operator application because the quadratic part of the energy is updated
//! incrementally along the search direction. Converged points are polished
//! by a semismooth Newton iteration (MINRES inner solves, so saddle points
//! are handled by the same code path).
//!
//! The mountain pass is a path-deformation method: starting from the segment
//! `t -> t u0`, the maximal-energy interior path point takes preconditioned
//! descent steps and the path is redistributed by energy-weighted arclength
//! resampling, until the max point is critical; a Newton polish then lands
//! on the saddle.

use crate::error::{Error, Result};
use crate::geometry::{Grid, ScalarField};
use crate::linalg::{self, minres};
use crate::model::{
    self, bulk_deriv_node, bulk_energy_node, bulk_second_deriv_node, CutoffContext, ModelParams,
};
use crate::operators::SubLaplacian;
use crate::Real;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Outcome of one solve. `m1_estimate`, `m2_estimate` and `level_c` are
/// filled by the operations that compute them.
#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub energy_eps: T,
    pub energy_exact: T,
    pub residual_sup: T,
    pub iterations: usize,
    pub m1_estimate: Option<T>,
    pub m2_estimate: Option<T>,
    pub level_c: Option<T>,
}

/// `E_eps` or its truncation at a cap field (`cap = None` leaves the
/// functional untouched; critical points of the capped functional satisfy
/// `u <= cap` by the maximum principle).
pub struct TruncatedFunctional<'a, T> {
    pub op: &'a SubLaplacian<T>,
    pub params: ModelParams<T>,
    pub ctx: &'a CutoffContext<T>,
    pub cap: Option<&'a ScalarField<T>>,
    weights: Vec<T>,
}

pub fn build_truncated<'a, T: Real>(
    op: &'a SubLaplacian<T>,
    params: ModelParams<T>,
    ctx: &'a CutoffContext<T>,
    cap: Option<&'a ScalarField<T>>,
) -> TruncatedFunctional<'a, T> {
    let grid = op.grid();
    let weights = (0..grid.num_nodes()).map(|j| grid.haar_weight(j)).collect();
    TruncatedFunctional {
        op,
        params,
        ctx,
        cap,
        weights,
    }
}

impl<'a, T: Real> TruncatedFunctional<'a, T> {
    pub fn grid(&self) -> &Grid<T> {
        self.op.grid()
    }

    #[inline]
    fn cap_at(&self, j: usize) -> T {
        self.cap.map_or(T::infinity(), |c| c.values[j])
    }

    /// Bulk part of the energy (everything except the quadratic term).
    pub fn bulk_energy(&self, u: &[T]) -> T {
        linalg::pairwise(u.len(), |j| {
            self.weights[j] * bulk_energy_node(&self.params, self.ctx, j, u[j], self.cap_at(j))
        })
    }

    pub fn energy(&self, u: &ScalarField<T>) -> T {
        T::from_f64(0.5) * self.op.h1_seminorm_sq(u) + self.bulk_energy(&u.values)
    }

    /// Energy using a precomputed `au = A u`.
    fn energy_with_au(&self, u: &[T], au: &[T]) -> T {
        T::from_f64(0.5) * linalg::dot(u, au) + self.bulk_energy(u)
    }

    /// Residual (nodal gradient) using a precomputed `au = A u`; zero on the
    /// boundary layer.
    fn residual_from_au(&self, u: &[T], au: &[T], out: &mut [T]) {
        let grid = self.grid();
        for j in 0..u.len() {
            out[j] = if grid.is_interior(j) {
                au[j] + self.weights[j] * bulk_deriv_node(&self.params, self.ctx, j, u[j], self.cap_at(j))
            } else {
                T::zero()
            };
        }
    }

    pub fn residual(&self, u: &ScalarField<T>, out: &mut ScalarField<T>) {
        let mut au = vec![T::zero(); u.len()];
        self.op.apply(&u.values, &mut au);
        self.residual_from_au(&u.values, &au, &mut out.values);
    }

    /// Pointwise second derivative of the bulk term (for preconditioning
    /// and the Newton matrix).
    fn bulk_second(&self, u: &[T], out: &mut [T]) {
        for j in 0..u.len() {
            out[j] = bulk_second_deriv_node(&self.params, self.ctx, j, u[j], self.cap_at(j));
        }
    }

    pub fn residual_phys_sup(&self, r: &[T]) -> T {
        let grid = self.grid();
        let mut m = T::zero();
        for j in 0..r.len() {
            if grid.is_interior(j) {
                m = m.max((r[j] / self.weights[j]).abs());
            }
        }
        m
    }

    /// `g_tilde(x, s) = g_eps((min(s, cap(x)) - 1)_+)`.
    pub fn g_tilde(&self, node: usize, s: T) -> T {
        self.params
            .g_eps((s.min(self.cap_at(node)) - T::one()).max(T::zero()))
    }

    /// `G_tilde(x, s)`, the antiderivative of `g_tilde` in `s`.
    pub fn big_g_tilde(&self, node: usize, s: T) -> T {
        let c = self.cap_at(node);
        let sc = s.min(c);
        let mut g = self.params.big_g_eps(sc - T::one());
        if s > c {
            g += (s - c) * self.params.g_eps(c - T::one());
        }
        g
    }

    /// `B_eps(x, s)`, the capped mollifier primitive.
    pub fn b_eps(&self, node: usize, s: T) -> T {
        let c = self.cap_at(node);
        let eps = self.params.epsilon;
        let sc = s.min(c);
        let mut b = model::eval_b((sc - T::one()) / eps);
        if s > c {
            b += (s - c) * model::eval_mollifier((c - T::one()) / eps) / eps;
        }
        b
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions<T> {
    /// Target on the pointwise (weight-free) residual sup.
    pub tol_phys: T,
    pub max_iter: usize,
    pub newton_polish: bool,
    /// Polish target as a fraction of `tol_phys`.
    pub polish_factor: T,
}

impl<T: Real> MinimizeOptions<T> {
    /// Default tolerance `1e-7 * scale` with the scale set by the natural
    /// magnitude of the right-hand side terms.
    pub fn default_for(params: &ModelParams<T>, ctx: &CutoffContext<T>, grid: &Grid<T>) -> Self {
        let mut plateau_sum = T::zero();
        let mut count = 0usize;
        for j in 0..grid.num_nodes() {
            if grid.is_interior(j) {
                plateau_sum += ctx.phi(j, T::zero());
                count += 1;
            }
        }
        let plateau_mean = plateau_sum / T::from_usize(count.max(1));
        let scale = T::one()
            + params.lambda * params.growth_bound(T::from_f64(2.0))
            + params.beta * plateau_mean;
        MinimizeOptions {
            tol_phys: T::from_f64(1e-7) * scale,
            max_iter: 50_000,
            newton_polish: true,
            polish_factor: T::from_f64(1e-4),
        }
    }
}

/// Preconditioned NCG descent on the (possibly truncated) regularized
/// energy. Returns the minimizer and a report; the accepted-step energies
/// are nonincreasing by construction of the Armijo search.
pub fn minimize_energy<T: Real>(
    f: &TruncatedFunctional<T>,
    u_init: &ScalarField<T>,
    opts: &MinimizeOptions<T>,
) -> Result<(ScalarField<T>, SolveReport<T>)> {
    let grid = f.grid();
    let n = grid.num_nodes();
    let diag_a = f.op.diagonal();

    let mut u = u_init.clone();
    u.project_dirichlet(grid);

    let mut au = vec![T::zero(); n];
    f.op.apply(&u.values, &mut au);
    let mut r = vec![T::zero(); n];
    f.residual_from_au(&u.values, &au, &mut r);
    let mut energy = f.energy_with_au(&u.values, &au);

    let mut bulk2 = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut r_old = vec![T::zero(); n];
    let mut z_old = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut ad = vec![T::zero(); n];
    let mut az = vec![T::zero(); n];
    let mut trial = vec![T::zero(); n];
    let mut rz_old = T::zero();
    let mut steepest = true;

    // NCG drives the residual to a loose target; the Newton polish closes
    // the gap quadratically
    let ncg_target = if opts.newton_polish {
        opts.tol_phys * T::from_f64(1e3)
    } else {
        opts.tol_phys
    };

    let mut iterations = 0usize;
    let mut res_sup = f.residual_phys_sup(&r);

    while iterations < opts.max_iter {
        if res_sup <= ncg_target {
            break;
        }
        iterations += 1;

        f.bulk_second(&u.values, &mut bulk2);
        for j in 0..n {
            z[j] = if grid.is_interior(j) {
                let m = diag_a[j] + f.weights[j] * bulk2[j].max(T::zero());
                r[j] / if m > T::zero() { m } else { T::one() }
            } else {
                T::zero()
            };
        }
        let rz = linalg::dot(&r, &z);
        if steepest || rz_old <= T::zero() {
            for j in 0..n {
                d[j] = -z[j];
            }
            f.op.apply(&d, &mut ad);
            steepest = false;
        } else {
            // Polak-Ribiere+ with the incremental A d update
            let num = linalg::pairwise(n, |j| z[j] * (r[j] - r_old[j]));
            let beta = (num / rz_old).max(T::zero()).min(T::from_f64(20.0));
            for j in 0..n {
                d[j] = -z[j] + beta * d[j];
            }
            f.op.apply(&z, &mut az);
            for j in 0..n {
                ad[j] = -az[j] + beta * ad[j];
            }
        }
        rz_old = rz;
        r_old.copy_from_slice(&r);
        z_old.copy_from_slice(&z);
        let _ = &z_old;

        let slope = linalg::dot(&r, &d);
        if slope >= T::zero() {
            // bad direction: force steepest descent restart
            steepest = true;
            rz_old = T::zero();
            iterations -= 1;
            continue;
        }

        // quadratic coefficients of the energy along the ray
        let dau = linalg::dot(&d, &au);
        let dad = linalg::dot(&d, &ad);
        let quad0 = T::from_f64(0.5) * linalg::dot(&u.values, &au);

        // Newton-scaled initial step along d
        let curv = dad
            + linalg::pairwise(n, |j| {
                if grid.is_interior(j) {
                    f.weights[j] * bulk2[j].max(T::zero()) * d[j] * d[j]
                } else {
                    T::zero()
                }
            });
        let mut t = if curv > T::zero() {
            (-slope / curv).min(T::from_f64(1e3))
        } else {
            T::one()
        };
        let c1 = T::from_f64(1e-4);
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..n {
                trial[j] = u.values[j] + t * d[j];
            }
            let quad_t = quad0 + t * dau + T::from_f64(0.5) * t * t * dad;
            let e_t = quad_t + f.bulk_energy(&trial);
            if e_t <= energy + c1 * t * slope {
                u.values.copy_from_slice(&trial);
                for j in 0..n {
                    au[j] += t * ad[j];
                }
                debug_assert!(e_t <= energy + T::from_f64(1e-12) * (T::one() + energy.abs()));
                energy = e_t;
                accepted = true;
                break;
            }
            t *= T::from_f64(0.5);
        }
        if !accepted {
            if !steepest {
                // retry from steepest descent before giving up
                steepest = true;
                rz_old = T::zero();
                continue;
            }
            return Err(Error::Stagnation(format!(
                "energy line search failed at residual {res_sup:.3e} after {iterations} iterations"
            )));
        }

        // refresh the cached A u now and then to control drift
        if iterations % 256 == 0 {
            f.op.apply(&u.values, &mut au);
        }
        f.residual_from_au(&u.values, &au, &mut r);
        res_sup = f.residual_phys_sup(&r);
    }

    if res_sup > ncg_target {
        return Err(Error::IterationLimit {
            what: "energy minimization",
            iterations,
            residual: res_sup.as_f64(),
            last: u.values.iter().map(|v| v.as_f64()).collect(),
        });
    }

    if opts.newton_polish {
        let target = opts.tol_phys * opts.polish_factor;
        let its = newton_polish(f, &mut u, target, 40)?;
        iterations += its;
        f.op.apply(&u.values, &mut au);
        f.residual_from_au(&u.values, &au, &mut r);
        if f.residual_phys_sup(&r) > opts.tol_phys {
            return Err(Error::IterationLimit {
                what: "energy minimization (newton polish)",
                iterations,
                residual: f.residual_phys_sup(&r).as_f64(),
                last: u.values.iter().map(|v| v.as_f64()).collect(),
            });
        }
    }

    f.op.apply(&u.values, &mut au);
    f.residual_from_au(&u.values, &au, &mut r);
    let res_sup = f.residual_phys_sup(&r);
    let energy_eps = f.energy_with_au(&u.values, &au);
    let energy_exact = model::energy_exact(f.op, &f.params, &u);
    Ok((
        u,
        SolveReport {
            energy_eps,
            energy_exact,
            residual_sup: res_sup,
            iterations,
            m1_estimate: None,
            m2_estimate: None,
            level_c: None,
        },
    ))
}

/// Semismooth Newton with MINRES inner solves and a residual-norm line
/// search; converges to nearby critical points of any index. Returns the
/// iteration count; stops early (without error) if no further progress is
/// possible at rounding level.
pub fn newton_polish<T: Real>(
    f: &TruncatedFunctional<T>,
    u: &mut ScalarField<T>,
    tol_phys: T,
    max_newton: usize,
) -> Result<usize> {
    let grid = f.grid();
    let n = grid.num_nodes();
    let diag_a = f.op.diagonal();
    let mut au = vec![T::zero(); n];
    let mut r = vec![T::zero(); n];
    let mut bulk2 = vec![T::zero(); n];
    let mut dir = vec![T::zero(); n];
    let mut trial = vec![T::zero(); n];
    let mut r_trial = vec![T::zero(); n];
    let mut au_trial = vec![T::zero(); n];

    let mut its = 0usize;
    for _ in 0..max_newton {
        f.op.apply(&u.values, &mut au);
        f.residual_from_au(&u.values, &au, &mut r);
        let res = f.residual_phys_sup(&r);
        if res <= tol_phys {
            return Ok(its);
        }
        its += 1;

        f.bulk_second(&u.values, &mut bulk2);
        let pinv: Vec<T> = (0..n)
            .map(|j| {
                if grid.is_interior(j) {
                    let m = diag_a[j] + f.weights[j] * bulk2[j].abs();
                    if m > T::zero() {
                        T::one() / m
                    } else {
                        T::one()
                    }
                } else {
                    T::one()
                }
            })
            .collect();
        let mut apply_j = |v: &[T], out: &mut [T]| {
            f.op.apply_masked(v, out);
            for j in 0..n {
                if grid.is_interior(j) {
                    out[j] += f.weights[j] * bulk2[j] * v[j];
                }
            }
        };
        let neg_r: Vec<T> = r.iter().map(|&x| -x).collect();
        dir.iter_mut().for_each(|v| *v = T::zero());
        minres(&mut apply_j, &pinv, &neg_r, &mut dir, T::from_f64(1e-10), 4000);

        let r_norm = linalg::norm2(&r);
        let mut t = T::one();
        let mut improved = false;
        for _ in 0..30 {
            for j in 0..n {
                trial[j] = u.values[j] + t * dir[j];
            }
            f.op.apply(&trial, &mut au_trial);
            f.residual_from_au(&trial, &au_trial, &mut r_trial);
            if linalg::norm2(&r_trial) <= (T::one() - T::from_f64(1e-4) * t) * r_norm {
                u.values.copy_from_slice(&trial);
                improved = true;
                break;
            }
            t *= T::from_f64(0.5);
        }
        if !improved {
            return Ok(its); // rounding floor reached
        }
    }
    Ok(its)
}

/// Multi-start estimate of `m1(lambda) = inf E`: minimize `E_eps` at the
/// caller's (smallest scheduled) epsilon from the canonical starts and
/// report the smallest exact energy. Ties within 1e-10 keep the smaller
/// `W_0^{1,2}`-norm minimizer.
pub struct M1Estimate<T> {
    pub value: T,
    pub minimizer: ScalarField<T>,
    pub minimizer_report: SolveReport<T>,
    /// (start label, exact energy at the minimizer found from that start)
    pub per_start: Vec<(String, T)>,
}

pub fn estimate_m1<T: Real>(
    f: &TruncatedFunctional<T>,
    barrier: &ScalarField<T>,
    restarts: usize,
    seed: u64,
    opts: &MinimizeOptions<T>,
) -> Result<M1Estimate<T>> {
    if restarts < 8 {
        return Err(Error::invalid(format!(
            "estimate_m1 requires at least 8 restarts, got {restarts}"
        )));
    }
    let grid = f.grid();
    let mut starts: Vec<(String, ScalarField<T>)> = vec![
        ("zero".to_string(), ScalarField::zeros(grid)),
        ("half_barrier".to_string(), barrier.scaled(T::from_f64(0.5))),
        ("barrier".to_string(), barrier.clone()),
        ("twice_barrier".to_string(), barrier.scaled(T::from_f64(2.0))),
    ];
    let amp_scale = barrier.sup_norm().max(T::one());
    for i in 0..restarts.saturating_sub(4) {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let dim = grid.dim();
        let center: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.3..0.7)).collect();
        let width: f64 = rng.gen_range(0.15..0.45);
        let amp = T::from_f64(rng.gen_range(0.5..2.0)) * amp_scale;
        let mut x = vec![T::zero(); dim];
        let mut bump = ScalarField::zeros(grid);
        for j in 0..grid.num_nodes() {
            if grid.is_interior(j) {
                grid.node_coords(j, &mut x);
                let mut prof = T::one();
                for k in 0..dim {
                    let lo = grid.lo()[k];
                    let hi = grid.hi()[k];
                    let t = ((x[k] - lo) / (hi - lo)).as_f64();
                    let d = ((t - center[k]) / width).powi(2);
                    prof *= T::from_f64((1.0 - d).max(0.0));
                }
                bump.values[j] = amp * prof;
            }
        }
        starts.push((format!("bump{i}"), bump));
    }

    let results: Vec<Result<(String, ScalarField<T>, SolveReport<T>)>> = starts
        .into_par_iter()
        .map(|(label, u0)| {
            let (u, rep) = minimize_energy(f, &u0, opts)?;
            Ok((label, u, rep))
        })
        .collect();

    let mut best: Option<(String, ScalarField<T>, SolveReport<T>, T)> = None;
    let mut per_start = Vec::new();
    for res in results {
        let (label, u, rep) = res?;
        let exact = rep.energy_exact;
        per_start.push((label.clone(), exact));
        let unorm = f.op.h1_seminorm_sq(&u);
        best = match best {
            None => Some((label, u, rep, unorm)),
            Some((blabel, bu, brep, bnorm)) => {
                let better = exact < brep.energy_exact - T::from_f64(1e-10)
                    || ((exact - brep.energy_exact).abs() <= T::from_f64(1e-10) && unorm < bnorm);
                if better {
                    Some((label, u, rep, unorm))
                } else {
                    Some((blabel, bu, brep, bnorm))
                }
            }
        };
    }
    let (_, minimizer, mut report, _) = best.unwrap();
    report.m1_estimate = Some(report.energy_exact);
    Ok(M1Estimate {
        value: report.energy_exact,
        minimizer,
        minimizer_report: report,
        per_start,
    })
}

/// `eps0(lambda) = min(|m1|/(2 lambda a0 H(Omega)), (p a0 / a1)^{1/(p-1)})`;
/// infinite when a term degenerates.
pub fn eps0_of_lambda<T: Real>(params: &ModelParams<T>, m1_abs: T, volume: T) -> T {
    let first = if params.lambda > T::zero() && params.a0 > T::zero() {
        m1_abs / (T::from_f64(2.0) * params.lambda * params.a0 * volume)
    } else {
        T::infinity()
    };
    let second = if params.a1 > T::zero() {
        (params.p * params.a0 / params.a1).powf(T::one() / (params.p - T::one()))
    } else {
        T::infinity()
    };
    first.min(second)
}

/// Deformation path from 0 to the minimizer.
#[derive(Debug, Clone)]
pub struct Path<T> {
    pub points: Vec<ScalarField<T>>,
    pub energies: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct MountainPassOptions<T> {
    pub path_points: usize,
    pub max_sweeps: usize,
    pub tol_phys: T,
    /// Residual level at which the max point is handed to the Newton polish.
    pub newton_trigger: T,
    pub rim_samples: usize,
    pub reparam_every: usize,
}

impl<T: Real> MountainPassOptions<T> {
    pub fn default_for(minimize: &MinimizeOptions<T>) -> Self {
        MountainPassOptions {
            path_points: 17,
            max_sweeps: 40_000,
            tol_phys: minimize.tol_phys,
            newton_trigger: minimize.tol_phys * T::from_f64(1e4),
            rim_samples: 64,
            reparam_every: 4,
        }
    }
}

/// Numerical mountain pass between 0 and `endpoint` for the truncated
/// functional. Returns the critical point, a report carrying the sampled
/// rim value `m2` and the level `c`, and the final path.
pub fn mountain_pass<T: Real>(
    tf: &TruncatedFunctional<T>,
    endpoint: &ScalarField<T>,
    opts: &MountainPassOptions<T>,
    seed: u64,
    warm_path: Option<Path<T>>,
) -> Result<(ScalarField<T>, SolveReport<T>, Path<T>)> {
    let grid = tf.grid();
    let n = grid.num_nodes();
    let p = opts.path_points;
    if p < 16 {
        return Err(Error::invalid(format!(
            "mountain pass requires at least 16 path points, got {p}"
        )));
    }

    let zero = ScalarField::zeros(grid);
    let e_zero = tf.energy(&zero);
    if e_zero.abs() > T::from_f64(1e-10) {
        return Err(Error::invalid(format!(
            "truncated functional does not vanish at 0 (got {e_zero:.3e})"
        )));
    }
    let e_end = tf.energy(endpoint);
    if !(e_end < T::zero()) {
        return Err(Error::GeometryFailure(format!(
            "mountain pass premise violated: E(endpoint) = {e_end:.6e} >= 0"
        )));
    }

    // sampled rim value m2 at radius r = min(||u0||/2, 0.1)
    let endpoint_norm = tf.op.h1_seminorm_sq(endpoint).sqrt();
    let r_rim = (endpoint_norm * T::from_f64(0.5)).min(T::from_f64(0.1));
    let mut m2 = T::infinity();
    {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = ScalarField::zeros(grid);
        for _ in 0..opts.rim_samples {
            for j in 0..n {
                v.values[j] = if grid.is_interior(j) {
                    T::from_f64(rng.gen_range(-1.0..1.0))
                } else {
                    T::zero()
                };
            }
            let norm = tf.op.h1_seminorm_sq(&v).sqrt();
            let scale = r_rim / norm;
            let scaled = v.scaled(scale);
            m2 = m2.min(tf.energy(&scaled));
        }
    }

    // path initialization (possibly warm started)
    let mut path: Vec<ScalarField<T>> = match warm_path {
        Some(w) if w.points.len() == p => w.points,
        _ => (0..p)
            .map(|k| endpoint.scaled(T::from_usize(k) / T::from_usize(p - 1)))
            .collect(),
    };
    path[0] = zero.clone();
    path[p - 1] = endpoint.clone();

    // cached A-applications per path point (A is linear, so interpolation
    // and endpoint swaps stay exact)
    let mut aus: Vec<Vec<T>> = path
        .iter()
        .map(|q| {
            let mut au = vec![T::zero(); n];
            tf.op.apply(&q.values, &mut au);
            au
        })
        .collect();
    let mut energies: Vec<T> = (0..p)
        .map(|k| tf.energy_with_au(&path[k].values, &aus[k]))
        .collect();

    let diag_a = tf.op.diagonal();
    let mut r = vec![T::zero(); n];
    let mut bulk2 = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut ad = vec![T::zero(); n];
    let mut trial = vec![T::zero(); n];
    let mut iterations = 0usize;

    for sweep in 0..opts.max_sweeps {
        // string sweep: one preconditioned descent step on every interior
        // path point (the max-energy point in particular)
        for k in 1..p - 1 {
            tf.residual_from_au(&path[k].values, &aus[k], &mut r);
            tf.bulk_second(&path[k].values, &mut bulk2);
            for j in 0..n {
                d[j] = if grid.is_interior(j) {
                    let m = diag_a[j] + tf.weights[j] * bulk2[j].max(T::zero());
                    -r[j] / if m > T::zero() { m } else { T::one() }
                } else {
                    T::zero()
                };
            }
            let slope = linalg::dot(&r, &d);
            if slope >= T::zero() {
                continue;
            }
            tf.op.apply(&d, &mut ad);
            let quad0 = T::from_f64(0.5) * linalg::dot(&path[k].values, &aus[k]);
            let dau = linalg::dot(&d, &aus[k]);
            let dad = linalg::dot(&d, &ad);
            let curv = dad
                + linalg::pairwise(n, |j| {
                    if grid.is_interior(j) {
                        tf.weights[j] * bulk2[j].max(T::zero()) * d[j] * d[j]
                    } else {
                        T::zero()
                    }
                });
            let mut t = if curv > T::zero() {
                (-slope / curv).min(T::one())
            } else {
                T::one()
            };
            for _ in 0..40 {
                for j in 0..n {
                    trial[j] = path[k].values[j] + t * d[j];
                }
                let e_t = quad0 + t * dau + T::from_f64(0.5) * t * t * dad + tf.bulk_energy(&trial);
                if e_t <= energies[k] + T::from_f64(1e-4) * t * slope {
                    path[k].values.copy_from_slice(&trial);
                    for j in 0..n {
                        aus[k][j] += t * ad[j];
                    }
                    energies[k] = e_t;
                    break;
                }
                t *= T::from_f64(0.5);
            }
            iterations += 1;
        }

        if sweep % opts.reparam_every == opts.reparam_every - 1 {
            reparametrize(tf, &mut path, &mut aus, &mut energies);
        }

        // locate the interior maximum
        let mut kmax = 1usize;
        for k in 2..p - 1 {
            if energies[k] > energies[kmax] {
                kmax = k;
            }
        }
        let e_max = energies[kmax];

        // collapse detection: the ridge fell to the endpoint levels
        let ridge = e_max - e_zero.max(e_end);
        if ridge <= T::from_f64(1e-12) * (T::one() + e_end.abs()) {
            return Err(Error::GeometryFailure(
                "path collapse: max-energy point reached the endpoint level (lambda too small for two solutions?)"
                    .to_string(),
            ));
        }

        tf.residual_from_au(&path[kmax].values, &aus[kmax], &mut r);
        let res = tf.residual_phys_sup(&r);
        if std::env::var("CARNOT_MP_TRACE").is_ok() && sweep % 100 == 0 {
            let es: Vec<String> = energies.iter().map(|e| format!("{:.2}", e.as_f64())).collect();
            eprintln!("sweep {sweep}: kmax {kmax}, res {res:.3e}, E = [{}]", es.join(" "));
        }
        if res <= opts.newton_trigger {
            // polish the max point to a genuine critical point
            let mut candidate = path[kmax].clone();
            newton_polish(tf, &mut candidate, opts.tol_phys, 60)?;
            let mut au = vec![T::zero(); n];
            tf.op.apply(&candidate.values, &mut au);
            tf.residual_from_au(&candidate.values, &au, &mut r);
            let res_final = tf.residual_phys_sup(&r);
            let e_final = tf.energy_with_au(&candidate.values, &au);
            let norm = linalg::dot(&candidate.values, &au).max(T::zero()).sqrt();
            if res_final <= opts.tol_phys && norm > r_rim * T::from_f64(0.5) && e_final > e_end {
                let energy_exact = model::energy_exact(tf.op, &tf.params, &candidate);
                let report = SolveReport {
                    energy_eps: e_final,
                    energy_exact,
                    residual_sup: res_final,
                    iterations: iterations + sweep,
                    m1_estimate: None,
                    m2_estimate: Some(m2),
                    level_c: Some(e_final),
                };
                path[kmax] = candidate.clone();
                let final_path = Path {
                    points: path,
                    energies,
                };
                return Ok((candidate, report, final_path));
            }
            if norm <= r_rim * T::from_f64(0.5) || e_final <= e_end {
                return Err(Error::GeometryFailure(
                    "mountain pass polished into an endpoint basin".to_string(),
                ));
            }
            // polish made progress but not to tolerance: absorb and continue
            tf.op.apply(&candidate.values, &mut aus[kmax]);
            energies[kmax] = tf.energy_with_au(&candidate.values, &aus[kmax]);
            path[kmax] = candidate;
        }
    }

    Err(Error::IterationLimit {
        what: "mountain pass deformation",
        iterations: opts.max_sweeps,
        residual: f64::NAN,
        last: Vec::new(),
    })
}

/// Energy-aware redistribution: resample the polyline at uniform
/// energy-weighted L2 arclength. Linear interpolation keeps the cached
/// `A`-applications exact.
fn reparametrize<T: Real>(
    tf: &TruncatedFunctional<T>,
    path: &mut [ScalarField<T>],
    aus: &mut [Vec<T>],
    energies: &mut [T],
) {
    let p = path.len();
    let n = path[0].values.len();
    let e_min = energies.iter().cloned().fold(T::infinity(), T::min);
    let e_max = energies.iter().cloned().fold(T::neg_infinity(), T::max);
    let span = (e_max - e_min).max(T::from_f64(1e-300));

    let mut cum = vec![T::zero(); p];
    for k in 0..p - 1 {
        let mut len_sq = T::zero();
        for j in 0..n {
            let diff = path[k + 1].values[j] - path[k].values[j];
            len_sq += diff * diff;
        }
        let seg_e = energies[k].max(energies[k + 1]);
        let weight = T::one() + T::from_f64(3.0) * (seg_e - e_min) / span;
        cum[k + 1] = cum[k] + len_sq.sqrt() * weight;
    }
    let total = cum[p - 1];
    if !(total > T::zero()) {
        return;
    }

    let old_path: Vec<Vec<T>> = path.iter().map(|q| q.values.clone()).collect();
    let old_aus: Vec<Vec<T>> = aus.to_vec();

    for (i, target) in (1..p - 1)
        .map(|i| (i, total * T::from_usize(i) / T::from_usize(p - 1)))
        .collect::<Vec<_>>()
    {
        let mut seg = 0usize;
        while seg + 2 < p && cum[seg + 1] < target {
            seg += 1;
        }
        let denom = (cum[seg + 1] - cum[seg]).max(T::from_f64(1e-300));
        let frac = (target - cum[seg]) / denom;
        for j in 0..n {
            path[i].values[j] =
                old_path[seg][j] + frac * (old_path[seg + 1][j] - old_path[seg][j]);
            aus[i][j] = old_aus[seg][j] + frac * (old_aus[seg + 1][j] - old_aus[seg][j]);
        }
        energies[i] = tf.energy_with_au(&path[i].values, &aus[i]);
    }
}

/// Nodewise ordering and level-set inclusion diagnostics for a solution
/// pair.
#[derive(Debug, Clone)]
pub struct OrderingReport<T> {
    /// interior nodes with `u1 <= 0`
    pub positivity_violations: usize,
    /// nodes with `u1 > u0 + 1e-6`
    pub ordering_violations: usize,
    /// nodes with `u1 > 1` but `u0 <= 1` (breaks `{u1>1} ⊆ {u0>1}`)
    pub upper_inclusion_violations: usize,
    /// nodes with `u0 < 1` but `u1 >= 1` (breaks `{u0<1} ⊆ {u1<1}`)
    pub lower_inclusion_violations: usize,
    pub sup_difference: T,
    /// Haar measure of `{u1 > 1}`
    pub upper_region_measure: T,
    pub distinct: bool,
}

pub fn ordering_check<T: Real>(
    grid: &Grid<T>,
    u1: &ScalarField<T>,
    u0: &ScalarField<T>,
) -> OrderingReport<T> {
    let tol = T::from_f64(1e-6);
    let mut positivity = 0;
    let mut ordering = 0;
    let mut upper = 0;
    let mut lower = 0;
    for j in 0..grid.num_nodes() {
        let a = u1.values[j];
        let b = u0.values[j];
        if grid.is_interior(j) && a <= T::zero() {
            positivity += 1;
        }
        if a > b + tol {
            ordering += 1;
        }
        if a > T::one() && b <= T::one() {
            upper += 1;
        }
        if b < T::one() && a >= T::one() {
            lower += 1;
        }
    }
    let sup_difference = u1.sup_diff(u0);
    OrderingReport {
        positivity_violations: positivity,
        ordering_violations: ordering,
        upper_inclusion_violations: upper,
        lower_inclusion_violations: lower,
        sup_difference,
        upper_region_measure: model::super_level_measure(grid, u1, T::one()),
        distinct: sup_difference > T::from_f64(1e-8),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auxiliary::{barrier_v0, solve_singular};
    use crate::geometry::GroupModel;
    use crate::model::GKind;
    use rand::prelude::*;

    fn setup(
        n: usize,
        lambda: f64,
        beta: f64,
        eps: f64,
    ) -> (SubLaplacian<f64>, ModelParams<f64>, CutoffContext<f64>) {
        let g = GroupModel::euclidean(1).unwrap();
        let grid: Grid<f64> = Grid::unit_box(1, n).unwrap();
        let op = SubLaplacian::new(&g, &grid).unwrap();
        let params =
            ModelParams::new(lambda, beta, 0.5, 1.5, 1.0, 0.0, eps, GKind::ConstantOne).unwrap();
        let ctx = if beta > 0.0 {
            let sol = solve_singular(&op, beta, 0.5).unwrap();
            CutoffContext::new(op.grid(), sol.u_beta, 0.5).unwrap()
        } else {
            CutoffContext::inactive(op.grid())
        };
        (op, params, ctx)
    }

    #[test]
    fn minimize_trivial_zero() {
        let (op, params, ctx) = setup(65, 0.0, 0.0, 0.1);
        let tf = build_truncated(&op, params.clone(), &ctx, None);
        let opts = MinimizeOptions::default_for(&params, &ctx, op.grid());
        let zero = ScalarField::zeros(op.grid());
        let (u, rep) = minimize_energy(&tf, &zero, &opts).unwrap();
        assert_eq!(u.sup_norm(), 0.0);
        assert_eq!(rep.energy_eps, 0.0);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn minimizer_matches_shooting_oracle() {
        let n = 513;
        let (op, params, ctx) = setup(n, 60.0, 0.05, 0.003125);
        let tf = build_truncated(&op, params.clone(), &ctx, None);
        let opts = MinimizeOptions::default_for(&params, &ctx, op.grid());
        let v0 = barrier_v0(&op, &params, &ctx, params.growth_bound(1.0)).unwrap();
        let (u, rep) = minimize_energy(&tf, &v0, &opts).unwrap();
        assert!(rep.residual_sup <= opts.tol_phys);
        assert!(rep.energy_eps < 0.0);

        let pr = crate::oracle::ShootingProblem::new(1.0, params.clone(), 1025).unwrap();
        let br = crate::oracle::shoot_free_boundary(&pr).unwrap();
        // sample the oracle at the grid nodes (oracle n = 2*grid n - 1)
        let mut worst = 0.0f64;
        for j in 0..n {
            let dev = (u.values[j] - br.u0.u[2 * j]).abs();
            worst = worst.max(dev);
        }
        assert!(worst <= 1e-3, "u0 vs oracle sup deviation {worst:.3e}");
    }

    #[test]
    fn critical_point_certificate() {
        let n = 257;
        let (op, params, ctx) = setup(n, 60.0, 0.05, 0.0125);
        let tf = build_truncated(&op, params.clone(), &ctx, None);
        let opts = MinimizeOptions::default_for(&params, &ctx, op.grid());
        let v0 = barrier_v0(&op, &params, &ctx, params.growth_bound(1.0)).unwrap();
        let (u, _) = minimize_energy(&tf, &v0, &opts).unwrap();
        let mut r = ScalarField::zeros(op.grid());
        tf.residual(&u, &mut r);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let mut v = ScalarField::zeros(op.grid());
            for j in 0..op.grid().num_nodes() {
                if op.grid().is_interior(j) {
                    v.values[j] = rng.gen_range(-1.0..1.0);
                }
            }
            let pair = crate::linalg::dot(&r.values, &v.values).abs();
            let vnorm = crate::linalg::norm2(&v.values);
            assert!(pair <= 1e-6 * vnorm, "pairing {pair:.3e} vs {vnorm:.3e}");
        }
    }

    #[test]
    fn truncated_functional_probes() {
        let (op, params, ctx) = setup(65, 5.0, 0.1, 0.1);
        let cap = ScalarField::constant_interior(op.grid(), 1.4);
        let tf = build_truncated(&op, params.clone(), &ctx, Some(&cap));
        // g_tilde vanishes below min(1, cap)
        for j in [10usize, 32, 50] {
            for s in [0.0, 0.4, 0.9, 1.0] {
                assert_eq!(tf.g_tilde(j, s), 0.0);
            }
            // growth chain: G_tilde <= (a0 + a1/p)|s|^q on a probe grid
            for s in [1.1, 1.3, 2.0, 4.0] {
                let bound = (params.a0 + params.a1 / params.p) * s * s;
                assert!(tf.big_g_tilde(j, s) <= bound + 1e-12);
            }
        }
        // inactive truncation: energies agree with E_eps on probes
        let tf_inf = build_truncated(&op, params.clone(), &ctx, None);
        let probe = ScalarField::from_fn_dirichlet(op.grid(), |x| {
            1.3 * (std::f64::consts::PI * x[0]).sin()
        });
        let cap_big = ScalarField::constant_interior(op.grid(), 1e9);
        let tf_big = build_truncated(&op, params, &ctx, Some(&cap_big));
        let a = tf_inf.energy(&probe);
        let b = tf_big.energy(&probe);
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn mountain_pass_finds_unstable_branch() {
        let n = 513;
        let (op, params, ctx) = setup(n, 60.0, 0.05, 0.003125);
        let tf = build_truncated(&op, params.clone(), &ctx, None);
        let opts = MinimizeOptions::default_for(&params, &ctx, op.grid());
        let v0 = barrier_v0(&op, &params, &ctx, params.growth_bound(1.0)).unwrap();
        let (u0, _) = minimize_energy(&tf, &v0, &opts).unwrap();

        let tf_cap = build_truncated(&op, params.clone(), &ctx, Some(&u0));
        let mp_opts = MountainPassOptions::default_for(&opts);
        let (u1, rep, _path) = mountain_pass(&tf_cap, &u0, &mp_opts, 42, None).unwrap();

        assert!(rep.m2_estimate.unwrap() > 0.0, "m2 = {:?}", rep.m2_estimate);
        assert!(rep.level_c.unwrap() > 0.0);

        // against the unstable oracle branch
        let pr = crate::oracle::ShootingProblem::new(1.0, params, 1025).unwrap();
        let br = crate::oracle::shoot_free_boundary(&pr).unwrap();
        let mut worst = 0.0f64;
        for j in 0..n {
            worst = worst.max((u1.values[j] - br.u1.u[2 * j]).abs());
        }
        assert!(worst <= 1e-2, "u1 vs oracle sup deviation {worst:.3e}");

        // truncation consistency and ordering
        let ord = ordering_check(op.grid(), &u1, &u0);
        assert_eq!(ord.ordering_violations, 0);
        assert_eq!(ord.positivity_violations, 0);
        assert_eq!(ord.upper_inclusion_violations, 0);
        assert!(ord.upper_region_measure > 0.0);
        assert!(ord.distinct);
    }

    #[test]
    fn mountain_pass_rejects_degenerate_endpoint() {
        let (op, params, ctx) = setup(65, 5.0, 0.0, 0.1);
        let tf = build_truncated(&op, params.clone(), &ctx, None);
        let opts = MinimizeOptions::default_for(&params, &ctx, op.grid());
        let mp_opts = MountainPassOptions::default_for(&opts);
        let zero = ScalarField::zeros(op.grid());
        assert!(matches!(
            mountain_pass(&tf, &zero, &mp_opts, 1, None),
            Err(Error::GeometryFailure(_))
        ));
    }

    #[test]
    fn m1_estimate_basic() {
        let (op, params, ctx) = setup(129, 0.0, 0.0, 0.05);
        let tf = build_truncated(&op, params.clone(), &ctx, None);
        let opts = MinimizeOptions::default_for(&params, &ctx, op.grid());
        let barrier = ScalarField::constant_interior(op.grid(), 1.0);
        let est = estimate_m1(&tf, &barrier, 8, 7, &opts).unwrap();
        assert!(est.value.abs() <= 1e-10, "m1(0) = {}", est.value);
        assert!(estimate_m1(&tf, &barrier, 4, 7, &opts).is_err());
    }

    #[test]
    fn m1_monotone_in_lambda() {
        let mut values = Vec::new();
        for lambda in [20.0, 40.0, 80.0] {
            let (op, params, ctx) = setup(129, lambda, 0.05, 0.0125);
            let tf = build_truncated(&op, params.clone(), &ctx, None);
            let opts = MinimizeOptions::default_for(&params, &ctx, op.grid());
            let v0 = barrier_v0(&op, &params, &ctx, params.growth_bound(1.0)).unwrap();
            let est = estimate_m1(&tf, &v0, 8, 3, &opts).unwrap();
            values.push(est.value);
        }
        assert!(values[1] <= values[0] + 1e-9, "{values:?}");
        assert!(values[2] <= values[1] + 1e-9, "{values:?}");
    }

    #[test]
    fn ordering_check_identical_fields() {
        let grid: Grid<f64> = Grid::unit_box(1, 33).unwrap();
        let u = ScalarField::from_fn_dirichlet(&grid, |x| {
            1.5 * (std::f64::consts::PI * x[0]).sin()
        });
        let rep = ordering_check(&grid, &u, &u);
        assert_eq!(rep.ordering_violations, 0);
        assert_eq!(rep.upper_inclusion_violations, 0);
        assert_eq!(rep.lower_inclusion_violations, 0);
        assert!(!rep.distinct);
        assert!(rep.upper_region_measure > 0.0);
    }
}
