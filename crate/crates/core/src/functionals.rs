//! Energy, Pohozaev functional, ray derivatives and the discrete first variation.
//!
//! Everything except [`first_variation`] depends on a field only through its
//! [`IntegralBundle`], so the scalar functionals are cheap enough to live inside
//! root finders.

use serde::{Deserialize, Serialize};

use crate::mesh::{Exponents, Field, Geometry};

/// The integrals `I_x = ∫|∇_x u|²`, `I_z = ∫|u_z|²`, `I₂ = I_x + I_z`,
/// `S_q = ∫|u|^{q+1}` and `S_p = ∫|u|^{p+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralBundle {
    pub i_x: f64,
    pub i_z: f64,
    pub i2: f64,
    pub s_q: f64,
    pub s_p: f64,
}

impl IntegralBundle {
    pub fn new(i_x: f64, i_z: f64, s_q: f64, s_p: f64) -> Self {
        Self { i_x, i_z, i2: i_x + i_z, s_q, s_p }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }

    /// Bundle of `t·u` given the bundle of `u`.
    pub fn scaled(&self, t: f64, q: f64, p: f64) -> Self {
        let t2 = t * t;
        Self::new(t2 * self.i_x, t2 * self.i_z, t.powf(q + 1.0) * self.s_q, t.powf(p + 1.0) * self.s_p)
    }

    /// `I_x/2* + I_z/2`, the gradient part of the Pohozaev functional.
    pub fn pohozaev_gradient(&self, exps: &Exponents) -> f64 {
        self.i_x / exps.two_star() + self.i_z / 2.0
    }

    /// Scale used for relative tolerances, `I₂ + S_q`.
    pub fn scale(&self) -> f64 {
        self.i2 + self.s_q
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams {
    pub exponents: Exponents,
    pub geometry: Geometry,
    pub lambda: f64,
}

/// `Φ = I₂/2 − λS_p/(p+1) + S_q/(q+1)`.
pub fn energy(b: &IntegralBundle, lambda: f64, exps: &Exponents) -> f64 {
    b.i2 / 2.0 + potential(b, lambda, exps)
}

/// `S_q/(q+1) − λS_p/(p+1)`, shared by the energy and the Pohozaev functional.
fn potential(b: &IntegralBundle, lambda: f64, exps: &Exponents) -> f64 {
    b.s_q / (exps.q() + 1.0) - lambda * b.s_p / (exps.p() + 1.0)
}

/// `P = I_x/2* + I_z/2 + S_q/(q+1) − λS_p/(p+1)`.
pub fn pohozaev(b: &IntegralBundle, lambda: f64, exps: &Exponents) -> f64 {
    b.pohozaev_gradient(exps) + potential(b, lambda, exps)
}

/// `Φ′ = d/dt Φ(tu)|_{t=1} = I₂ − λS_p + S_q`.
pub fn fiber_phi1(b: &IntegralBundle, lambda: f64) -> f64 {
    b.i2 - lambda * b.s_p + b.s_q
}

/// `Φ″ = d²/dt² Φ(tu)|_{t=1} = I₂ − λpS_p + qS_q`.
pub fn fiber_phi2(b: &IntegralBundle, lambda: f64, exps: &Exponents) -> f64 {
    b.i2 - lambda * exps.p() * b.s_p + exps.q() * b.s_q
}

#[inline]
pub(crate) fn signed_pow(v: f64, e: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum() * v.abs().powf(e)
    }
}

/// Discrete `−u_zz − Δ_x u − λ|u|^{p−1}u + |u|^{q−1}u` at the free nodes, zero on the
/// Dirichlet row.
///
/// The operator is the exact gradient of the discrete energy with respect to the
/// quadrature pairing, so `pairing(first_variation(u), v)` is the Gateaux derivative
/// of `Φ(integrals(·))` at `u` in direction `v`.
pub fn first_variation(u: &Field, lambda: f64, exps: &Exponents) -> Field {
    let (lx, lz) = crate::mesh::neg_laplacian_parts(u);
    let g = u.grid();
    let mut out = vec![0.0; g.len()];
    for i in 0..g.nz() {
        for j in 0..g.nr() {
            let k = g.idx(i, j);
            let v = u.values()[k];
            out[k] = lx[k] + lz[k] - lambda * signed_pow(v, exps.p()) + signed_pow(v, exps.q());
        }
    }
    Field::from_raw(g, out)
}

/// Sup norm of the first variation over the free nodes.
pub fn residual(u: &Field, lambda: f64, exps: &Exponents) -> f64 {
    first_variation(u, lambda, exps).sup_interior()
}
