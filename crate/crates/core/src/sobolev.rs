//! Inverse of the discrete `−∂_zz − Δ_x` operator, used to turn L² gradients into
//! Sobolev gradients.
//!
//! The operator is diagonalized in z by the FFT; each Fourier mode leaves a
//! tridiagonal radial system that is solved by the Thomas algorithm.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::mesh::{pairing, Field, Grid};

pub struct SobolevSolver {
    grid: Arc<Grid>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Off-diagonals of the radial operator: row `j` couples to `j-1` with `lower[j]`
    /// and to `j+1` with `upper[j]`.
    lower: Vec<f64>,
    upper: Vec<f64>,
    diag: Vec<f64>,
    mu: Vec<f64>,
}

impl std::fmt::Debug for SobolevSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SobolevSolver").field("nz", &self.grid.nz()).field("nr", &self.grid.nr()).finish()
    }
}

impl SobolevSolver {
    pub fn new(grid: &Arc<Grid>) -> Self {
        let nz = grid.nz();
        let nr = grid.nr();
        let hr2 = grid.hr() * grid.hr();
        let hz2 = grid.hz() * grid.hz();
        let (face, mass) = (grid.face(), grid.mass());
        let mut lower = vec![0.0; nr];
        let mut upper = vec![0.0; nr];
        let mut diag = vec![0.0; nr];
        for j in 0..nr {
            let fo = face[j];
            let fi = if j == 0 { 0.0 } else { face[j - 1] };
            let d = mass[j] * hr2;
            diag[j] = (fo + fi) / d;
            upper[j] = if j + 1 < nr { -fo / d } else { 0.0 };
            lower[j] = -fi / d;
        }
        let mu = (0..nz).map(|k| (2.0 - 2.0 * (2.0 * PI * k as f64 / nz as f64).cos()) / hz2).collect();
        let mut planner = FftPlanner::new();
        Self {
            grid: Arc::clone(grid),
            forward: planner.plan_fft_forward(nz),
            inverse: planner.plan_fft_inverse(nz),
            lower,
            upper,
            diag,
            mu,
        }
    }

    fn thomas<T>(&self, mu: f64, rhs: &mut [T], scratch: &mut [f64])
    where
        T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let n = rhs.len();
        // Forward sweep: scratch holds modified upper coefficients.
        let mut b = self.diag[0] + mu;
        scratch[0] = self.upper[0] / b;
        rhs[0] = rhs[0] * (1.0 / b);
        for j in 1..n {
            b = self.diag[j] + mu - self.lower[j] * scratch[j - 1];
            scratch[j] = self.upper[j] / b;
            rhs[j] = (rhs[j] - rhs[j - 1] * self.lower[j]) * (1.0 / b);
        }
        for j in (0..n - 1).rev() {
            rhs[j] = rhs[j] - rhs[j + 1] * scratch[j];
        }
    }

    /// Solves `(−δ_zz − Δ_x) G = g` on the free nodes; `G` vanishes on the Dirichlet row.
    pub fn solve(&self, g: &Field) -> Field {
        let grid = &self.grid;
        let (nz, nr) = (grid.nz(), grid.nr());
        let mut spec = vec![Complex::new(0.0, 0.0); nz * nr];
        // Column-major in j so each radial column is a contiguous length-nz FFT.
        for j in 0..nr {
            for i in 0..nz {
                spec[j * nz + i] = Complex::new(g.at(i, j), 0.0);
            }
        }
        self.forward.process(&mut spec);
        let mut col = vec![Complex::new(0.0, 0.0); nr];
        let mut scratch = vec![0.0; nr];
        for k in 0..nz {
            for j in 0..nr {
                col[j] = spec[j * nz + k];
            }
            self.thomas(self.mu[k], &mut col, &mut scratch);
            for j in 0..nr {
                spec[j * nz + k] = col[j];
            }
        }
        self.inverse.process(&mut spec);
        let scale = 1.0 / nz as f64;
        let mut out = vec![0.0; grid.len()];
        for j in 0..nr {
            for i in 0..nz {
                out[grid.idx(i, j)] = spec[j * nz + i].re * scale;
            }
        }
        Field::from_raw(grid, out)
    }

    /// z-averages `g` and solves the radial problem once, broadcasting the result so
    /// every row is bitwise identical.
    pub fn solve_z_constant(&self, g: &Field) -> Field {
        let grid = &self.grid;
        let (nz, nr) = (grid.nz(), grid.nr());
        let mut col = vec![0.0; nr];
        for (j, c) in col.iter_mut().enumerate() {
            *c = (0..nz).map(|i| g.at(i, j)).sum::<f64>() / nz as f64;
        }
        let mut scratch = vec![0.0; nr];
        self.thomas(0.0, &mut col, &mut scratch);
        let mut out = vec![0.0; grid.len()];
        for i in 0..nz {
            out[grid.idx(i, 0)..grid.idx(i, 0) + nr].copy_from_slice(&col);
        }
        Field::from_raw(grid, out)
    }

    /// Squared Sobolev norm `⟨g, L⁻¹g⟩` of an L² gradient together with `L⁻¹g`.
    pub fn gradient(&self, g: &Field, z_constant: bool) -> (Field, f64) {
        let sg = if z_constant { self.solve_z_constant(g) } else { self.solve(g) };
        let n2 = pairing(g, &sg);
        (sg, n2)
    }
}

/// z-average of a field, broadcast back to all rows.
pub fn z_average(u: &Field) -> Field {
    let grid = u.grid();
    let (nz, nr) = (grid.nz(), grid.nr());
    let mut row = vec![0.0; nr + 1];
    for (j, r) in row.iter_mut().enumerate().take(nr) {
        *r = (0..nz).map(|i| u.at(i, j)).sum::<f64>() / nz as f64;
    }
    let mut out = vec![0.0; grid.len()];
    for i in 0..nz {
        out[grid.idx(i, 0)..=grid.idx(i, nr)].copy_from_slice(&row);
    }
    Field::from_raw(grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{neg_laplacian_parts, Geometry};

    fn apply_l(u: &Field) -> Field {
        let (lx, lz) = neg_laplacian_parts(u);
        let v = lx.iter().zip(&lz).map(|(a, b)| a + b).collect();
        Field::from_raw(u.grid(), v)
    }

    #[test]
    fn solve_inverts_operator() {
        let grid = Grid::new(Geometry::new(1.3, 0.7, 4).unwrap(), 12, 10).unwrap();
        let u = Field::from_fn(&grid, |z, r| (1.0 + 0.3 * (z * 2.0).sin()) * (0.7 - r) + r * r * z.cos());
        let s = SobolevSolver::new(&grid);
        let back = s.solve(&apply_l(&u));
        for (a, b) in back.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn z_constant_solve_is_exact_and_constant() {
        let grid = Grid::new(Geometry::new(1.0, 1.0, 3).unwrap(), 8, 16).unwrap();
        let u = Field::from_fn(&grid, |_, r| (1.0 - r) * (1.0 + r));
        let s = SobolevSolver::new(&grid);
        let back = s.solve_z_constant(&apply_l(&u));
        assert!(back.is_z_constant());
        for (a, b) in back.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn sobolev_norm_is_positive() {
        let grid = Grid::new(Geometry::new(1.0, 1.0, 3).unwrap(), 8, 8).unwrap();
        let g = Field::from_fn(&grid, |z, r| z - r + 0.1);
        let (_, n2) = SobolevSolver::new(&grid).gradient(&g, false);
        assert!(n2 > 0.0);
    }
}
