//! Cylinder discretization `(-T, T) x B_R` under a radial ansatz `u = u(z, r)`.
//!
//! Nodes sit at `z_i = -T + i*hz` (periodic, `i = 0..nz`) and `r_j = j*hr`
//! (`j = 0..=nr`, Dirichlet at `j = nr`). Every integral is
//! `hz * omega_{N-1} * sum_ij W_j f_ij` where `W_j` is the exact `r^{N-1}` volume
//! of the radial dual cell `[r_{j-1/2}, r_{j+1/2}] ∩ [0, R]`. Gradient integrals use
//! staggered differences weighted by the face factor `F_j = r_{j+1/2}^{N-1} hr`,
//! which makes the discrete energy gradient reduce to the standard symmetric
//! `u_rr + (N-1)/r u_r` stencil with the `N u_rr` limit at the axis.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functionals::IntegralBundle;

/// Exponent triple `(q, p, N)` with `0 < q < p < 1` and `N >= 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    q: f64,
    p: f64,
    n: usize,
}

impl Exponents {
    pub fn new(q: f64, p: f64, n: usize) -> Result<Self> {
        if !(q.is_finite() && p.is_finite() && 0.0 < q && q < p && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "exponents must satisfy 0 < q < p < 1, got q = {q}, p = {p}"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidParameter(format!("dimension N must be >= 3, got {n}")));
        }
        Ok(Self { q, p, n })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Critical Sobolev exponent `2N/(N-2)`.
    pub fn two_star(&self) -> f64 {
        let n = self.n as f64;
        2.0 * n / (n - 2.0)
    }

    /// `N(1-q)(1-p) - 2(1+q)(1+p)`; positive exactly on the admissible exponent set.
    pub fn d_star(&self) -> f64 {
        let n = self.n as f64;
        n * (1.0 - self.q) * (1.0 - self.p) - 2.0 * (1.0 + self.q) * (1.0 + self.p)
    }

    pub fn in_es(&self) -> bool {
        self.d_star() > 0.0
    }
}

/// Surface area of the unit sphere in `R^n`, `2 pi^{n/2} / Gamma(n/2)`.
pub fn unit_sphere_area(n: usize) -> f64 {
    assert!(n >= 1);
    // Gamma(n/2) by the half-integer recursion.
    let mut gamma = if n.is_multiple_of(2) { 1.0 } else { PI.sqrt() };
    let mut x = if n.is_multiple_of(2) { 1.0 } else { 0.5 };
    let target = n as f64 / 2.0;
    while x < target - 0.25 {
        gamma *= x;
        x += 1.0;
    }
    2.0 * PI.powf(target) / gamma
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    half_period: f64,
    r_omega: f64,
    dim: usize,
    sphere_area: f64,
}

impl Geometry {
    pub fn new(half_period: f64, r_omega: f64, dim: usize) -> Result<Self> {
        if !(half_period.is_finite() && half_period > 0.0) {
            return Err(Error::InvalidParameter(format!("T must be positive, got {half_period}")));
        }
        if !(r_omega.is_finite() && r_omega > 0.0) {
            return Err(Error::InvalidParameter(format!("R_omega must be positive, got {r_omega}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self { half_period, r_omega, dim, sphere_area: unit_sphere_area(dim) })
    }

    pub fn half_period(&self) -> f64 {
        self.half_period
    }

    pub fn r_omega(&self) -> f64 {
        self.r_omega
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `omega_{N-1}`.
    pub fn sphere_area(&self) -> f64 {
        self.sphere_area
    }

    /// `|D_T| = 2T * omega_{N-1} R^N / N`.
    pub fn volume(&self) -> f64 {
        2.0 * self.half_period * self.sphere_area * self.r_omega.powi(self.dim as i32)
            / self.dim as f64
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    geometry: Geometry,
    nz: usize,
    nr: usize,
    hz: f64,
    hr: f64,
    face: Vec<f64>,
    mass: Vec<f64>,
}

impl Grid {
    pub fn new(geometry: Geometry, nz: usize, nr: usize) -> Result<Arc<Self>> {
        if nz < 4 || !nz.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("nz must be even and >= 4, got {nz}")));
        }
        if nr < 4 {
            return Err(Error::InvalidParameter(format!("nr must be >= 4, got {nr}")));
        }
        let n = geometry.dim() as i32;
        let hz = 2.0 * geometry.half_period() / nz as f64;
        let hr = geometry.r_omega() / nr as f64;
        let face = (0..nr).map(|j| ((j as f64 + 0.5) * hr).powi(n - 1) * hr).collect();
        let vol = |r: f64| r.powi(n) / n as f64;
        let mass = (0..=nr)
            .map(|j| {
                let lo = if j == 0 { 0.0 } else { (j as f64 - 0.5) * hr };
                let hi = if j == nr { geometry.r_omega() } else { (j as f64 + 0.5) * hr };
                vol(hi) - vol(lo)
            })
            .collect();
        Ok(Arc::new(Self { geometry, nz, nr, hz, hr, face, mass }))
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn hz(&self) -> f64 {
        self.hz
    }

    pub fn hr(&self) -> f64 {
        self.hr
    }

    pub fn z(&self, i: usize) -> f64 {
        -self.geometry.half_period() + i as f64 * self.hz
    }

    pub fn r(&self, j: usize) -> f64 {
        j as f64 * self.hr
    }

    /// Number of stored values, `nz * (nr + 1)`.
    pub fn len(&self) -> usize {
        self.nz * (self.nr + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.nr + 1) + j
    }

    /// Radial dual-cell weights `W_j` (`j = 0..=nr`).
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Radial face weights `F_j` for the face between `r_j` and `r_{j+1}`.
    pub fn face(&self) -> &[f64] {
        &self.face
    }

    /// `hz * omega_{N-1}`, the factor shared by every cell weight.
    pub fn cell_factor(&self) -> f64 {
        self.hz * self.geometry.sphere_area()
    }

    /// Quadrature weight of node `(i, j)`.
    pub fn weight(&self, j: usize) -> f64 {
        self.cell_factor() * self.mass[j]
    }
}

/// Discrete function on the cylinder grid, stored row-major in `(i, j)`.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
            && self.grid.nz == other.grid.nz
            && self.grid.nr == other.grid.nr
            && self.grid.geometry == other.grid.geometry
    }
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: Arc::clone(grid), values: vec![0.0; grid.len()] }
    }

    /// Validates length, finiteness and the Dirichlet row.
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at flat index {k}")));
        }
        let nr = grid.nr();
        for i in 0..grid.nz() {
            if values[grid.idx(i, nr)] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "Dirichlet row violated at i = {i}"
                )));
            }
        }
        Ok(Self { grid: Arc::clone(grid), values })
    }

    /// Samples `f(z, r)`; the Dirichlet row is set to zero.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = vec![0.0; grid.len()];
        for i in 0..grid.nz() {
            let z = grid.z(i);
            for j in 0..grid.nr() {
                values[grid.idx(i, j)] = f(z, grid.r(j));
            }
        }
        Self { grid: Arc::clone(grid), values }
    }

    pub(crate) fn from_raw(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid: Arc::clone(grid), values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[cfg(test)]
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { grid: Arc::clone(&self.grid), values: self.values.iter().map(|v| s * v).collect() }
    }

    pub fn abs(&self) -> Self {
        Self { grid: Arc::clone(&self.grid), values: self.values.iter().map(|v| v.abs()).collect() }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Field) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        Self { grid: Arc::clone(&self.grid), values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Sup norm over the free nodes (`j < nr`).
    pub fn sup_interior(&self) -> f64 {
        let g = &self.grid;
        let mut m = 0.0_f64;
        for i in 0..g.nz() {
            for j in 0..g.nr() {
                m = m.max(self.at(i, j).abs());
            }
        }
        m
    }

    /// Shift by `k` cells in z: `out(i) = self(i - k mod nz)`.
    pub fn shift_z(&self, k: usize) -> Self {
        let g = &self.grid;
        let mut out = vec![0.0; g.len()];
        for i in 0..g.nz() {
            let src = (i + g.nz() - k % g.nz()) % g.nz();
            for j in 0..=g.nr() {
                out[g.idx(i, j)] = self.values[g.idx(src, j)];
            }
        }
        Self { grid: Arc::clone(g), values: out }
    }

    /// True when every z-row is bitwise identical.
    pub fn is_z_constant(&self) -> bool {
        let g = &self.grid;
        let row0 = &self.values[0..=g.nr()];
        (1..g.nz()).all(|i| &self.values[g.idx(i, 0)..=g.idx(i, g.nr())] == row0)
    }
}

/// Quadrature of a nodal field, summed row-major.
pub fn integrate(u: &Field) -> f64 {
    let g = u.grid();
    let mut total = 0.0;
    for i in 0..g.nz() {
        let mut row = 0.0;
        for j in 0..=g.nr() {
            row += g.mass[j] * u.at(i, j);
        }
        total += row;
    }
    total * g.cell_factor()
}

/// Weighted pairing `sum w_ij a_ij b_ij` over the free nodes.
pub fn pairing(a: &Field, b: &Field) -> f64 {
    let g = a.grid();
    let mut total = 0.0;
    for i in 0..g.nz() {
        let mut row = 0.0;
        for j in 0..g.nr() {
            let k = g.idx(i, j);
            row += g.mass[j] * a.values[k] * b.values[k];
        }
        total += row;
    }
    total * g.cell_factor()
}

/// Central difference in z with periodic wraparound.
pub fn d_z(u: &Field) -> Field {
    let g = u.grid();
    let nz = g.nz();
    let mut out = vec![0.0; g.len()];
    for i in 0..nz {
        let ip = (i + 1) % nz;
        let im = (i + nz - 1) % nz;
        for j in 0..=g.nr() {
            out[g.idx(i, j)] = (u.at(ip, j) - u.at(im, j)) / (2.0 * g.hz());
        }
    }
    Field::from_raw(g, out)
}

/// Radial derivative: central in the interior, second-order one-sided at both ends.
pub fn d_r(u: &Field) -> Field {
    let g = u.grid();
    let nr = g.nr();
    let h = g.hr();
    let mut out = vec![0.0; g.len()];
    for i in 0..g.nz() {
        out[g.idx(i, 0)] = (-3.0 * u.at(i, 0) + 4.0 * u.at(i, 1) - u.at(i, 2)) / (2.0 * h);
        for j in 1..nr {
            out[g.idx(i, j)] = (u.at(i, j + 1) - u.at(i, j - 1)) / (2.0 * h);
        }
        out[g.idx(i, nr)] = (3.0 * u.at(i, nr) - 4.0 * u.at(i, nr - 1) + u.at(i, nr - 2)) / (2.0 * h);
    }
    Field::from_raw(g, out)
}

/// `(I_x, I_z, S_q, S_p)` for exponents `q`, `p`.
pub fn integrals(u: &Field, q: f64, p: f64) -> IntegralBundle {
    let g = u.grid();
    let (nz, nr) = (g.nz(), g.nr());
    let (hz2, hr2) = (g.hz() * g.hz(), g.hr() * g.hr());
    let (mut ix, mut iz, mut sq, mut sp) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..nz {
        let ip = (i + 1) % nz;
        for j in 0..nr {
            let v = u.at(i, j);
            let w = g.mass[j];
            let dr = u.at(i, j + 1) - v;
            let dz = u.at(ip, j) - v;
            ix += g.face[j] * dr * dr / hr2;
            iz += w * dz * dz / hz2;
            let a = v.abs();
            if a > 0.0 {
                sq += w * a.powf(q + 1.0);
                sp += w * a.powf(p + 1.0);
            }
        }
    }
    let c = g.cell_factor();
    IntegralBundle::new(c * ix, c * iz, c * sq, c * sp)
}

/// Applies the discrete operators `(-d_zz u, -Δ_x u)` separately, mass-normalized so that
/// `pairing(op(u), v)` is the symmetric bilinear form of the corresponding gradient integral.
pub(crate) fn neg_laplacian_parts(u: &Field) -> (Vec<f64>, Vec<f64>) {
    let g = u.grid();
    let (nz, nr) = (g.nz(), g.nr());
    let (hz2, hr2) = (g.hz() * g.hz(), g.hr() * g.hr());
    let mut lz = vec![0.0; g.len()];
    let mut lx = vec![0.0; g.len()];
    for i in 0..nz {
        let ip = (i + 1) % nz;
        let im = (i + nz - 1) % nz;
        for j in 0..nr {
            let k = g.idx(i, j);
            let v = u.values[k];
            lz[k] = (2.0 * v - u.at(ip, j) - u.at(im, j)) / hz2;
            let outer = g.face[j] * (u.at(i, j + 1) - v);
            let inner = if j == 0 { 0.0 } else { g.face[j - 1] * (v - u.at(i, j - 1)) };
            lx[k] = -(outer - inner) / (g.mass[j] * hr2);
        }
    }
    (lx, lz)
}
