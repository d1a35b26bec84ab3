//! Classification of constrained minimizers along the λ-axis and the search for the
//! compact-support threshold `λ*(T)`.
//!
//! `λ*(T)` is located as the upper end of the set where the minimizer branch has
//! `P = 0`: a λ is "in Z" when the minimizer has `P < −tol_Z`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibering::{minimize_constrained, SolveOptions, SolveResult};
use crate::mesh::{d_r, Exponents, Field, Grid};
use crate::rayleigh::{default_seeds, Extremals};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Support threshold relative to `max|u|`.
    pub eps_supp: f64,
    /// Boundary-derivative threshold relative to `max|d_r u|`.
    pub eps_flux: f64,
    pub eps_ztriv: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { eps_supp: 1e-6, eps_flux: 1e-3, eps_ztriv: 1e-6 }
    }
}

/// Per-z-slice support radius `ρ(z) = max{r_j : |u(z, r_j)| > eps}`.
pub fn support_radius(u: &Field, eps: f64) -> Vec<f64> {
    let g = u.grid();
    (0..g.nz())
        .map(|i| {
            (0..=g.nr())
                .rev()
                .find(|&j| u.at(i, j).abs() > eps)
                .map_or(0.0, |j| g.r(j))
        })
        .collect()
}

/// Support and periodicity flags for a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub support_radius: Vec<f64>,
    pub max_support: f64,
    pub max_boundary_slope: f64,
    pub compact_support: bool,
    pub iz_fraction: f64,
    pub periodically_trivial: bool,
}

pub fn classify_field(u: &Field, iz_fraction: f64, opts: &ClassifyOptions) -> Classification {
    let g = u.grid();
    let rho = support_radius(u, opts.eps_supp * u.max_abs());
    let max_support = rho.iter().fold(0.0_f64, |m, &r| m.max(r));
    let du = d_r(u);
    let eps_flux = opts.eps_flux * du.max_abs();
    let max_boundary_slope = (0..g.nz()).map(|i| du.at(i, g.nr()).abs()).fold(0.0_f64, f64::max);
    let limit = g.geometry().r_omega() - 2.0 * g.hr();
    let compact_support = max_support <= limit * (1.0 + 1e-12) && max_boundary_slope <= eps_flux;
    Classification {
        support_radius: rho,
        max_support,
        max_boundary_slope,
        compact_support,
        iz_fraction,
        periodically_trivial: iz_fraction <= opts.eps_ztriv,
    }
}

/// Sets the support and periodicity flags of a solve result.
pub fn classify(r: &mut SolveResult, opts: &ClassifyOptions) {
    let c = classify_field(&r.u, r.iz_fraction, opts);
    r.support_radius = c.support_radius;
    r.compact_support = c.compact_support;
    r.periodically_trivial = c.periodically_trivial;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub solve: SolveOptions,
    /// Absolute width of the final λ*(T) bracket.
    pub bisect_tol: f64,
    /// Number of λ values in the preliminary sweep of `(λ₁ₚ, λ₀ᵀ]`.
    pub coarse_points: usize,
    /// `P < −tol_z·(I₂ + S_q)` classifies λ as inside Z.
    pub tol_z: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { solve: SolveOptions::default(), bisect_tol: 1e-4, coarse_points: 4, tol_z: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub lambda: f64,
    pub feasible: bool,
    pub phi: Option<f64>,
    pub pohozaev: Option<f64>,
    pub phi2: Option<f64>,
    pub residual: Option<f64>,
    pub iz_fraction: Option<f64>,
    pub compact_support: Option<bool>,
    pub periodically_trivial: Option<bool>,
    pub in_z: Option<bool>,
    pub error: Option<String>,
}

impl ScanRow {
    fn from_result(r: &SolveResult, tol_z: f64) -> Self {
        Self {
            lambda: r.lambda,
            feasible: r.feasible,
            phi: Some(r.phi),
            pohozaev: Some(r.pohozaev),
            phi2: Some(r.phi2),
            residual: Some(r.residual),
            iz_fraction: Some(r.iz_fraction),
            compact_support: Some(r.compact_support),
            periodically_trivial: Some(r.periodically_trivial),
            in_z: Some(r.pohozaev < -tol_z * r.scale()),
            error: None,
        }
    }

    fn from_error(lambda: f64, e: &Error) -> Self {
        Self {
            lambda,
            feasible: false,
            phi: None,
            pohozaev: None,
            phi2: None,
            residual: None,
            iz_fraction: None,
            compact_support: None,
            periodically_trivial: None,
            in_z: None,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LambdaStar {
    pub lambda_star: f64,
    pub bracket: (f64, f64),
    pub witness: SolveResult,
    /// Every solve performed, in evaluation order (coarse sweep, then bisection).
    pub probes: Vec<ScanRow>,
    /// Number of sign changes of `in_z` seen in the coarse sweep.
    pub sign_changes: usize,
    pub halvings: Vec<f64>,
}

/// Keeps warm-start fields for continuation.
struct Continuation<'a> {
    exps: &'a Exponents,
    grid: &'a Arc<Grid>,
    opts: &'a ScanOptions,
    base: Vec<Field>,
    warm: Vec<Field>,
}

impl Continuation<'_> {
    fn solve(&mut self, lambda: f64) -> Result<SolveResult> {
        let mut seeds = self.warm.clone();
        seeds.extend(self.base.iter().cloned());
        let r = minimize_constrained(lambda, self.exps, self.grid, &seeds, &self.opts.solve)?;
        self.warm.insert(0, r.u.clone());
        self.warm.truncate(2);
        Ok(r)
    }
}

fn base_seeds(grid: &Arc<Grid>, ex: &Extremals) -> Vec<Field> {
    let mut s = default_seeds(grid);
    s.push(ex.lambda_0t.minimizer.clone());
    s.push(ex.lambda_1p.minimizer.clone());
    s
}

/// Brackets `λ*(T)` between `λ₁ₚ^{D_T}` and `λ₀ᵀ` by a coarse downward sweep followed
/// by bisection on the sign of `P`.
pub fn find_lambda_star(
    exps: &Exponents,
    grid: &Arc<Grid>,
    extremals: &Extremals,
    opts: &ScanOptions,
) -> Result<LambdaStar> {
    let l1p = extremals.lambda_1p.value;
    let l0 = extremals.lambda_0t.value;
    if !(l1p < l0) {
        return Err(Error::Bracket(format!("lambda_1P = {l1p} is not below lambda_0T = {l0}")));
    }
    let mut cont = Continuation { exps, grid, opts, base: base_seeds(grid, extremals), warm: Vec::new() };
    let mut probes = Vec::new();
    let n = opts.coarse_points.max(1);
    let mut coarse: Vec<(f64, bool)> = Vec::new();
    let mut last_in: Option<SolveResult> = None;
    for k in (1..=n).rev() {
        let lambda = l1p + (l0 - l1p) * k as f64 / n as f64;
        match cont.solve(lambda) {
            Ok(r) => {
                let row = ScanRow::from_result(&r, opts.tol_z);
                let in_z = row.in_z == Some(true);
                probes.push(row);
                coarse.push((lambda, in_z));
                if in_z {
                    last_in = Some(r);
                }
            }
            Err(e) => {
                probes.push(ScanRow::from_error(lambda, &e));
                coarse.push((lambda, false));
            }
        }
    }
    let bottom = l1p + opts.bisect_tol.min(1e-3 * (l0 - l1p));
    let r_bottom = cont.solve(bottom);
    match &r_bottom {
        Ok(r) => {
            let row = ScanRow::from_result(r, opts.tol_z);
            let in_z = row.in_z == Some(true);
            probes.push(row);
            coarse.push((bottom, in_z));
            if in_z {
                return Err(Error::Bracket(format!(
                    "P = {:.3e} < 0 already at lambda = {bottom}; the threshold lies below lambda_1P",
                    r.pohozaev
                )));
            }
        }
        Err(e) => {
            probes.push(ScanRow::from_error(bottom, e));
            coarse.push((bottom, false));
        }
    }
    // coarse is ordered by decreasing λ.
    let sign_changes = coarse.windows(2).filter(|w| w[0].1 != w[1].1).count();
    let top_out = coarse.iter().position(|&(_, z)| !z).expect("bottom is outside Z");
    if top_out == 0 {
        return Err(Error::Bracket("lambda_0T itself is not in Z".into()));
    }
    let mut hi = coarse[top_out - 1].0;
    let mut lo = coarse[top_out].0;
    // Re-seed continuation from the lowest in-Z solution above the bracket.
    cont.warm.clear();
    if let Some(r) = &last_in {
        cont.warm.push(r.u.clone());
    }
    let mut halvings = vec![hi - lo];
    while hi - lo > opts.bisect_tol {
        let mid = 0.5 * (lo + hi);
        let in_z = match cont.solve(mid) {
            Ok(r) => {
                let row = ScanRow::from_result(&r, opts.tol_z);
                let z = row.in_z == Some(true);
                probes.push(row);
                z
            }
            Err(e) => {
                probes.push(ScanRow::from_error(mid, &e));
                false
            }
        };
        if in_z {
            hi = mid;
        } else {
            lo = mid;
        }
        halvings.push(hi - lo);
    }
    let lambda_star = 0.5 * (lo + hi);
    let witness = cont.solve(lambda_star)?;
    Ok(LambdaStar { lambda_star, bracket: (lo, hi), witness, probes, sign_changes, halvings })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub lambda_1p: f64,
    pub lambda_0t: f64,
    pub lambda_0_omega: f64,
    pub lambda_star: Option<f64>,
    pub bracket: Option<(f64, f64)>,
    /// Rows sorted by increasing λ.
    pub rows: Vec<ScanRow>,
    pub mode: &'static str,
}

/// One constrained solve per λ, warm-started in decreasing λ. Errors are recorded
/// in the row and never abort the sweep.
pub fn sweep(
    exps: &Exponents,
    grid: &Arc<Grid>,
    extremals: &Extremals,
    lambdas: &[f64],
    opts: &ScanOptions,
) -> (Vec<ScanRow>, Vec<Option<SolveResult>>) {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut cont = Continuation { exps, grid, opts, base: base_seeds(grid, extremals), warm: Vec::new() };
    let mut rows: Vec<Option<ScanRow>> = vec![None; lambdas.len()];
    let mut results: Vec<Option<SolveResult>> = vec![None; lambdas.len()];
    for k in order {
        match cont.solve(lambdas[k]) {
            Ok(r) => {
                rows[k] = Some(ScanRow::from_result(&r, opts.tol_z));
                results[k] = Some(r);
            }
            Err(e) => rows[k] = Some(ScanRow::from_error(lambdas[k], &e)),
        }
    }
    let mut paired: Vec<(ScanRow, Option<SolveResult>)> =
        rows.into_iter().map(|r| r.expect("every row visited")).zip(results).collect();
    paired.sort_by(|a, b| a.0.lambda.total_cmp(&b.0.lambda));
    paired.into_iter().unzip()
}
