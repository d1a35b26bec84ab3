//! Volume-versus-boundary check of the Pohozaev identity on the ball cylinder.
//!
//! For a solution on `(−T, T) × B_R` the volume functional `P` equals
//! `−(1/2N)·ω_{N−1}·R^N·∫|u_r(z, R)|² dz`, since `x·ν = R` on the sphere. The
//! identity only holds for solutions, so the report carries the PDE residual of the
//! input and a warning when it is too large for the comparison to mean anything.

use serde::{Deserialize, Serialize};

use crate::functionals::{pohozaev, residual};
use crate::mesh::{d_r, integrals, Exponents, Field};
use crate::{Error, Result};

/// Boundary side of the identity, using the one-sided second-order `u_r` at `r = R`.
pub fn boundary_flux(u: &Field) -> f64 {
    let g = u.grid();
    let dr = d_r(u);
    let nr = g.nr();
    let mut s = 0.0;
    for i in 0..g.nz() {
        let v = dr.at(i, nr);
        s += g.hz() * v * v;
    }
    let n = g.geometry().dim() as f64;
    -g.geometry().sphere_area() * g.geometry().r_omega().powf(n) * s / (2.0 * n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Largest PDE residual (sup norm of the first variation) for which the
    /// identity is treated as meaningful.
    pub max_solution_residual: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { max_solution_residual: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PohozaevReport {
    pub lambda: f64,
    pub nz: usize,
    pub nr: usize,
    pub p_volume: f64,
    pub flux: f64,
    /// `|P_volume − flux|`.
    pub residual: f64,
    /// `I₂ + S_q`, the natural size of the functionals involved.
    pub scale: f64,
    /// Sup norm of the first variation of the input.
    pub solution_residual: f64,
    /// Fitted orders from a refinement study: `[identity residual, PDE residual]`.
    pub refinement_orders: Option<[f64; 2]>,
    pub warning: Option<String>,
}

/// Compares both sides of the identity for a single field.
pub fn verify(u: &Field, lambda: f64, exps: &Exponents, opts: &VerifyOptions) -> PohozaevReport {
    let b = integrals(u, exps.q(), exps.p());
    let p_volume = pohozaev(&b, lambda, exps);
    let flux = boundary_flux(u);
    let solution_residual = residual(u, lambda, exps);
    let warning = (!(solution_residual <= opts.max_solution_residual)).then(|| {
        format!(
            "field is not a solution (residual {solution_residual:.3e} > {:.3e}); the identity is not expected to hold",
            opts.max_solution_residual
        )
    });
    PohozaevReport {
        lambda,
        nz: u.grid().nz(),
        nr: u.grid().nr(),
        p_volume,
        flux,
        residual: (p_volume - flux).abs(),
        scale: b.scale(),
        solution_residual,
        refinement_orders: None,
        warning,
    }
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_order(h: &[f64], e: &[f64]) -> Result<f64> {
    if h.len() != e.len() || h.len() < 2 {
        return Err(Error::InvalidParameter("order fit needs at least two matching samples".into()));
    }
    if h.iter().chain(e).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter("order fit needs positive finite samples".into()));
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("order fit needs distinct mesh sizes".into()));
    }
    Ok(sxy / sxx)
}

/// Reports for every field plus a summary for the finest one carrying the fitted
/// convergence orders in the radial mesh width.
pub fn verify_refinement(
    fields: &[Field],
    lambda: f64,
    exps: &Exponents,
    opts: &VerifyOptions,
) -> Result<(Vec<PohozaevReport>, PohozaevReport)> {
    if fields.len() < 3 {
        return Err(Error::InvalidParameter(format!("refinement needs at least 3 grids, got {}", fields.len())));
    }
    let mut sorted: Vec<&Field> = fields.iter().collect();
    sorted.sort_by(|a, b| b.grid().hr().total_cmp(&a.grid().hr()));
    let reports: Vec<PohozaevReport> = sorted.iter().map(|u| verify(u, lambda, exps, opts)).collect();
    let h: Vec<f64> = sorted.iter().map(|u| u.grid().hr()).collect();
    let id: Vec<f64> = reports.iter().map(|r| r.residual).collect();
    let pde: Vec<f64> = reports.iter().map(|r| r.solution_residual).collect();
    let orders = [fit_order(&h, &id).unwrap_or(f64::NAN), fit_order(&h, &pde).unwrap_or(f64::NAN)];
    let mut finest = reports.last().cloned().expect("at least three reports");
    finest.refinement_orders = Some(orders);
    Ok((reports, finest))
}
