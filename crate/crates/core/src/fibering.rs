//! Nehari roots along rays, projection onto the constrained Nehari set
//! `{Φ′ = 0, P ≤ 0}` and the constrained energy minimization.
//!
//! A ray `v` is reduced to the larger root `t̃(v)` of
//! `g(t) = t^{1−q}I₂ − λt^{p−q}S_p + S_q`, which is admissible exactly when
//! `λ ≥ λ₁ₚ(v)`. The reduced functional `J(v) = Φ(t̃(v)v)` is minimized over
//! normalized rays with a Sobolev gradient. Since `Φ′` vanishes at `t̃`, the
//! derivative of the root drops out and `∇J(v) = t̃·DΦ(t̃v)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{energy, fiber_phi1, fiber_phi2, first_variation, pohozaev, IntegralBundle};
use crate::lambda_scan::{classify, ClassifyOptions};
use crate::mesh::{integrals, pairing, Exponents, Field, Grid};
use crate::newton;
use crate::rayleigh::{self, field_gradient, lambda1p_gradient, normalize, scale_factors, Quotient, QuotientOptions};
use crate::sobolev::SobolevSolver;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NehariRoots {
    pub t_star: Option<f64>,
    pub t_tilde: Option<f64>,
    pub lambda_min_ray: f64,
}

/// `g(t) = t^{1−q}I₂ − λt^{p−q}S_p + S_q`.
pub fn nehari_g(b: &IntegralBundle, lambda: f64, t: f64, exps: &Exponents) -> f64 {
    t.powf(1.0 - exps.q()) * b.i2 - lambda * t.powf(exps.p() - exps.q()) * b.s_p + b.s_q
}

/// Bisection until the bracket is `rel`-narrow or cannot be split further.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64, rel: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel * hi || mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Roots of `t ↦ Φ′(tu)` for a bundle with positive integrals.
pub fn nehari_roots(b: &IntegralBundle, lambda: f64, exps: &Exponents, tol_root: f64) -> Result<NehariRoots> {
    let fd = scale_factors(b, exps)?;
    let t1 = fd.t1;
    let lmin = fd.lambda1_u;
    // g(t) = t^{p−q}S_p(R¹(tu) − λ); the bracket uses the quotient form, which is
    // better scaled than g for large t.
    let h = |t: f64| {
        let (_, r1, _) = rayleigh::quotients(b, t, exps).expect("S_p > 0 checked");
        r1 - lambda
    };
    if lambda < lmin * (1.0 - tol_root) {
        return Ok(NehariRoots { t_star: None, t_tilde: None, lambda_min_ray: lmin });
    }
    if lambda <= lmin * (1.0 + tol_root) {
        return Ok(NehariRoots { t_star: Some(t1), t_tilde: Some(t1), lambda_min_ray: lmin });
    }
    let mut lo = t1;
    while h(lo) <= 0.0 {
        lo *= 0.5;
    }
    let mut hi = t1;
    while h(hi) <= 0.0 {
        hi *= 2.0;
    }
    let t_star = bisect(lo, t1, h, 0.0);
    let t_tilde = bisect(t1, hi, h, 0.0);
    Ok(NehariRoots { t_star: Some(t_star), t_tilde: Some(t_tilde), lambda_min_ray: lmin })
}

/// Larger Nehari root of the ray when the ray meets `{P ≤ 0}`, i.e. `λ ≥ λ₁ₚ(v)`.
pub fn project_ray(b: &IntegralBundle, lambda: f64, exps: &Exponents, tol_root: f64) -> Option<f64> {
    let fd = scale_factors(b, exps).ok()?;
    if lambda < fd.lambda1p_u {
        return None;
    }
    nehari_roots(b, lambda, exps, tol_root).ok()?.t_tilde
}

/// `t̃(v)·v`, or `None` when the ray misses the constrained Nehari set.
pub fn project_to_m(v: &Field, lambda: f64, exps: &Exponents, tol_root: f64) -> Option<Field> {
    let b = integrals(v, exps.q(), exps.p());
    project_ray(&b, lambda, exps, tol_root).map(|t| v.scaled(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Relative stationarity `‖∇J‖/I₂(u)` for the descent.
    pub tol_grad: f64,
    pub tol_root: f64,
    /// Relative Pohozaev tolerance; the absolute tolerance is `tol_p·(I₂ + S_q)`.
    pub tol_p: f64,
    /// Sup-norm residual target for Newton refinement.
    pub tol_res: f64,
    /// Relative energy-stagnation tolerance, measured against `I₂ + S_q`.
    pub tol_j: f64,
    pub newton_iters: usize,
    pub classify: ClassifyOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 3000,
            tol_grad: 1e-7,
            tol_root: 1e-12,
            tol_p: 1e-8,
            tol_res: 1e-6,
            tol_j: 1e-10,
            newton_iters: 40,
            classify: ClassifyOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub lambda: f64,
    pub u: Field,
    pub bundle: IntegralBundle,
    pub phi: f64,
    pub pohozaev: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub residual: f64,
    pub support_radius: Vec<f64>,
    pub iz_fraction: f64,
    pub compact_support: bool,
    pub periodically_trivial: bool,
    pub feasible: bool,
    pub converged: bool,
    /// True when the minimizer sits on the boundary `λ₁ₚ(v) = λ`.
    pub constraint_active: bool,
    pub iterations: usize,
    pub seed_index: usize,
    /// Energies of other seeds that ended within `10⁻⁶` (relative) of the best.
    pub near_ties: Vec<f64>,
}

/// Scalar part of a [`SolveResult`], for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub lambda: f64,
    pub bundle: IntegralBundle,
    pub phi: f64,
    pub pohozaev: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub residual: f64,
    pub scale: f64,
    pub max_abs: f64,
    pub support_radius: Vec<f64>,
    pub iz_fraction: f64,
    pub compact_support: bool,
    pub periodically_trivial: bool,
    pub feasible: bool,
    pub converged: bool,
    pub constraint_active: bool,
    pub iterations: usize,
    pub seed_index: usize,
    pub near_ties: Vec<f64>,
}

impl SolveResult {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            lambda: self.lambda,
            bundle: self.bundle,
            phi: self.phi,
            pohozaev: self.pohozaev,
            phi1: self.phi1,
            phi2: self.phi2,
            residual: self.residual,
            scale: self.scale(),
            max_abs: self.u.max_abs(),
            support_radius: self.support_radius.clone(),
            iz_fraction: self.iz_fraction,
            compact_support: self.compact_support,
            periodically_trivial: self.periodically_trivial,
            feasible: self.feasible,
            converged: self.converged,
            constraint_active: self.constraint_active,
            iterations: self.iterations,
            seed_index: self.seed_index,
            near_ties: self.near_ties.clone(),
        }
    }

    /// Scale `I₂ + S_q` used for relative tolerances.
    pub fn scale(&self) -> f64 {
        self.bundle.scale()
    }

    /// Assembles a result for a point already on the Nehari set.
    pub fn from_field(u: Field, lambda: f64, exps: &Exponents, opts: &SolveOptions) -> Self {
        let b = integrals(&u, exps.q(), exps.p());
        let scale = b.scale();
        let phi1 = fiber_phi1(&b, lambda);
        let pz = pohozaev(&b, lambda, exps);
        let residual = first_variation(&u, lambda, exps).sup_interior();
        let mut r = Self {
            lambda,
            bundle: b,
            phi: energy(&b, lambda, exps),
            pohozaev: pz,
            phi1,
            phi2: fiber_phi2(&b, lambda, exps),
            residual,
            support_radius: Vec::new(),
            iz_fraction: if b.i2 > 0.0 { b.i_z / b.i2 } else { 0.0 },
            compact_support: false,
            periodically_trivial: false,
            feasible: phi1.abs() <= opts.tol_root * scale && pz <= opts.tol_p * scale,
            converged: true,
            constraint_active: false,
            iterations: 0,
            seed_index: 0,
            near_ties: Vec::new(),
            u,
        };
        classify(&mut r, &opts.classify);
        r
    }
}

struct RayState {
    v: Field,
    t: f64,
    j: f64,
}

struct Minimizer<'a> {
    lambda: f64,
    exps: &'a Exponents,
    solver: SobolevSolver,
    opts: &'a SolveOptions,
}

impl Minimizer<'_> {
    fn state(&self, v: Field) -> Option<RayState> {
        let b = integrals(&v, self.exps.q(), self.exps.p());
        let t = project_ray(&b, self.lambda, self.exps, self.opts.tol_root)?;
        let j = energy(&b.scaled(t, self.exps.q(), self.exps.p()), self.lambda, self.exps);
        Some(RayState { v, t, j })
    }

    fn constraint(&self, v: &Field) -> Option<(f64, Field, Field, f64)> {
        let b = integrals(v, self.exps.q(), self.exps.p());
        let (val, dg) = lambda1p_gradient(&b, self.exps).ok()?;
        let g = field_gradient(v, &dg, self.exps);
        let (sg, n2) = self.solver.gradient(&g, false);
        Some((val - self.lambda, g, sg, n2))
    }

    /// Pulls a ray back into `{λ₁ₚ(v) ≤ λ}` by Newton steps on the constraint.
    fn restore(&self, mut v: Field) -> Option<Field> {
        let margin = 1e-12 * self.lambda;
        for _ in 0..50 {
            let (c, _, sg, n2) = self.constraint(&v)?;
            if c <= 0.0 {
                return Some(v);
            }
            if !(n2 > 0.0) {
                return None;
            }
            v = normalize(&v.axpy(-(c + margin) / n2, &sg), self.exps)?;
        }
        None
    }

    /// Phase one: lowers `λ₁ₚ` along the seed until the ray becomes admissible.
    fn admissible_seed(&self, seed: &Field) -> Option<Field> {
        let v = normalize(seed, self.exps)?;
        let b = integrals(&v, self.exps.q(), self.exps.p());
        let l1p = rayleigh::lambda1p_of(&b, self.exps).ok()?;
        if l1p <= self.lambda {
            return Some(v);
        }
        let qopts = QuotientOptions { max_iters: self.opts.max_iters, tol_grad: 1e-9 };
        let d = rayleigh::descend(Quotient::Lambda1P, self.exps, &self.solver, v, &qopts, Some(self.lambda)).ok()?;
        if d.value <= self.lambda {
            Some(d.u)
        } else {
            None
        }
    }

    fn run(&self, seed: &Field) -> Option<(RayState, usize, bool, bool)> {
        let v0 = self.admissible_seed(seed)?;
        let mut st = self.state(v0)?;
        let act_tol = 1e-7 * self.lambda;
        let mut step = f64::NAN;
        let mut stagnant = 0;
        let mut active = false;
        for it in 0..self.opts.max_iters {
            let u = st.v.scaled(st.t);
            let fv = first_variation(&u, self.lambda, self.exps);
            let g = fv.scaled(st.t);
            let (sg, _) = self.solver.gradient(&g, false);
            let mut dir = sg.scaled(-1.0);
            let cons = self.constraint(&st.v);
            active = false;
            if let Some((c, gc, sgc, nc2)) = &cons {
                if *c > -act_tol {
                    let a = pairing(gc, &dir);
                    if a > 0.0 && *nc2 > 0.0 {
                        active = true;
                        dir = dir.axpy(-a / nc2, sgc);
                    }
                }
            }
            let slope = pairing(&g, &dir);
            let i2u = integrals(&u, self.exps.q(), self.exps.p());
            let scale = i2u.scale();
            let stat = (-slope).max(0.0).sqrt() / i2u.i2;
            if stat <= self.opts.tol_grad {
                return Some((st, it, true, active));
            }
            if step.is_nan() {
                step = 0.1 / (-slope).sqrt();
            }
            let mut s = step;
            let mut next = None;
            for _ in 0..50 {
                let cand = normalize(&st.v.axpy(s, &dir), self.exps).and_then(|c| self.restore(c));
                if let Some(ns) = cand.and_then(|c| self.state(c)) {
                    if ns.j <= st.j + 1e-4 * s * slope {
                        next = Some(ns);
                        break;
                    }
                }
                s *= 0.5;
            }
            let Some(ns) = next else {
                return Some((st, it, false, active));
            };
            step = 2.0 * s;
            let dj = st.j - ns.j;
            st = ns;
            if dj <= self.opts.tol_j * scale {
                stagnant += 1;
                if stagnant >= 5 {
                    return Some((st, it + 1, true, active));
                }
            } else {
                stagnant = 0;
            }
        }
        Some((st, self.opts.max_iters, false, active))
    }
}

/// Approximately minimizes `Φ_λ` over `{Φ′ = 0, P ≤ 0}` from each seed and returns
/// the lowest-energy feasible result.
pub fn minimize_constrained(
    lambda: f64,
    exps: &Exponents,
    grid: &Arc<Grid>,
    seeds: &[Field],
    opts: &SolveOptions,
) -> Result<SolveResult> {
    if !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be finite, got {lambda}")));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    let m = Minimizer { lambda, exps, solver: SobolevSolver::new(grid), opts };
    let mut results: Vec<(SolveResult, usize)> = Vec::new();
    for (k, seed) in seeds.iter().enumerate() {
        let Some((st, iterations, converged, active)) = m.run(seed) else {
            continue;
        };
        let mut u = st.v.scaled(st.t);
        let b = integrals(&u, exps.q(), exps.p());
        let scale = b.scale();
        let mut phi = energy(&b, lambda, exps);
        if !active && pohozaev(&b, lambda, exps) < -opts.tol_p * scale && opts.newton_iters > 0 {
            let before = first_variation(&u, lambda, exps).sup_interior();
            let out = newton::refine(&u, lambda, exps, opts.newton_iters, opts.tol_res * 1e-3);
            if let Some(w) = project_to_m(&out.u, lambda, exps, opts.tol_root) {
                let wb = integrals(&w, exps.q(), exps.p());
                let wphi = energy(&wb, lambda, exps);
                let wres = first_variation(&w, lambda, exps).sup_interior();
                if wres < before
                    && wphi <= phi + 1e-9 * scale
                    && pohozaev(&wb, lambda, exps) <= opts.tol_p * wb.scale()
                    && fiber_phi2(&wb, lambda, exps) > 0.0
                {
                    u = w;
                    phi = wphi;
                }
            }
        }
        let _ = phi;
        let mut r = SolveResult::from_field(u, lambda, exps, opts);
        r.converged = converged;
        r.iterations = iterations;
        r.seed_index = k;
        r.constraint_active = active;
        results.push((r, k));
    }
    if results.is_empty() {
        return Err(Error::Infeasible(format!(
            "no seed admits a point with Phi' = 0 and P <= 0 at lambda = {lambda}"
        )));
    }
    let best = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.phi.total_cmp(&b.1 .0.phi).then(a.1 .1.cmp(&b.1 .1)))
        .map(|(i, _)| i)
        .expect("non-empty");
    let best_phi = results[best].0.phi;
    let tol = 1e-6 * best_phi.abs().max(results[best].0.scale() * 1e-6);
    let near: Vec<f64> = results
        .iter()
        .enumerate()
        .filter(|(i, r)| *i != best && (r.0.phi - best_phi).abs() <= tol)
        .map(|(_, r)| r.0.phi)
        .collect();
    let mut r = results.swap_remove(best).0;
    r.near_ties = near;
    Ok(r)
}
