//! Newton refinement of critical points of the discrete energy.
//!
//! The Hessian `K + diag(c·W_j(q|u|^{q−1} − λp|u|^{p−1}))` is assembled in a banded
//! layout. Periodic z-rows are interleaved as `0, 1, nz−1, 2, nz−2, …` so every
//! z-neighbour lies at most two rows away, which bounds the half-bandwidth by
//! `2·nr`. Updates are applied in the variable `w = u^q`, which solves the
//! near-dead-core balance `u^q ≈ (neighbour flux)` in a single step.

use crate::functionals::{energy, first_variation};
use crate::mesh::{integrals, Exponents, Field};

/// Symmetric positive definite banded matrix stored by lower diagonals.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    /// `data[k * (bw + 1) + d] = A[k][k − d]`.
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    /// Adds `v` to `A[a][b]` (and its mirror).
    pub fn add(&mut self, a: usize, b: usize, v: f64) {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        let d = hi - lo;
        assert!(d <= self.bw, "entry outside band");
        self.data[hi * (self.bw + 1) + d] += v;
    }

    /// In-place Cholesky factorization; `None` when a pivot is not positive.
    pub fn cholesky(mut self) -> Option<Self> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for k in 0..n {
            let j0 = k.saturating_sub(bw);
            for j in j0..=k {
                // L[k][j] = (A[k][j] − Σ_{m<j} L[k][m]L[j][m]) / L[j][j]
                let mut s = self.data[k * w + (k - j)];
                let m0 = j0.max(j.saturating_sub(bw));
                for m in m0..j {
                    s -= self.data[k * w + (k - m)] * self.data[j * w + (j - m)];
                }
                if j == k {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    self.data[k * w] = s.sqrt();
                } else {
                    self.data[k * w + (k - j)] = s / self.data[j * w];
                }
            }
        }
        Some(self)
    }

    /// Solves `L Lᵀ x = b` using a factor produced by [`BandedSpd::cholesky`].
    pub fn solve_factored(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for k in 0..n {
            let mut s = b[k];
            for m in k.saturating_sub(bw)..k {
                s -= self.data[k * w + (k - m)] * b[m];
            }
            b[k] = s / self.data[k * w];
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for m in k + 1..(k + bw + 1).min(n) {
                s -= self.data[m * w + (m - k)] * b[m];
            }
            b[k] = s / self.data[k * w];
        }
    }
}

/// Position of z-row `i` in the interleaved ordering.
fn interleave(nz: usize) -> Vec<usize> {
    let mut order = vec![0usize];
    let mut lo = 1;
    let mut hi = nz - 1;
    while lo <= hi {
        order.push(lo);
        if hi != lo {
            order.push(hi);
        }
        lo += 1;
        hi -= 1;
    }
    let mut pos = vec![0; nz];
    for (k, &i) in order.iter().enumerate() {
        pos[i] = k;
    }
    pos
}

/// Smallest positive value kept during Newton updates; dead-core nodes sit here.
const FLOOR: f64 = 1e-300;

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub u: Field,
    pub iterations: usize,
    pub residual: f64,
    pub factorization_failed: bool,
}

/// Runs damped Newton iterations on `DΦ_λ(u) = 0` starting from a nonnegative `u`.
///
/// Steps are accepted when either the energy or the weighted residual norm
/// decreases; iteration stops at `tol_res` in the sup norm.
pub fn refine(u0: &Field, lambda: f64, exps: &Exponents, max_iters: usize, tol_res: f64) -> NewtonOutcome {
    let grid = u0.grid().clone();
    let (nz, nr) = (grid.nz(), grid.nr());
    let (q, p) = (exps.q(), exps.p());
    let pos = interleave(nz);
    let n = nz * nr;
    let bw = 2 * nr;
    let slot = |i: usize, j: usize| pos[i] * nr + j;
    let hr2 = grid.hr() * grid.hr();
    let hz2 = grid.hz() * grid.hz();
    let (face, mass) = (grid.face().to_vec(), grid.mass().to_vec());

    let phi = |u: &Field| energy(&integrals(u, q, p), lambda, exps);
    let weighted_norm = |f: &Field| {
        let mut s = 0.0;
        for i in 0..nz {
            for j in 0..nr {
                s += mass[j] * f.at(i, j).powi(2);
            }
        }
        s.sqrt()
    };

    let mut u = Field::from_raw(
        &grid,
        u0.values()
            .iter()
            .enumerate()
            .map(|(k, &v)| if k % (nr + 1) == nr { 0.0 } else { v.abs().max(FLOOR) })
            .collect(),
    );
    let mut fv = first_variation(&u, lambda, exps);
    let mut res = fv.sup_interior();
    let mut merit_e = phi(&u);
    let mut merit_r = weighted_norm(&fv);
    let mut factorization_failed = false;
    let mut it = 0;
    while it < max_iters && res > tol_res {
        it += 1;
        let mut a = BandedSpd::zeros(n, bw);
        let mut rhs = vec![0.0; n];
        for i in 0..nz {
            let ip = (i + 1) % nz;
            for j in 0..nr {
                let k = slot(i, j);
                let ar = face[j] / hr2;
                a.add(k, k, ar);
                if j + 1 < nr {
                    let kn = slot(i, j + 1);
                    a.add(kn, kn, ar);
                    a.add(k, kn, -ar);
                }
                let az = mass[j] / hz2;
                let kz = slot(ip, j);
                a.add(k, k, az);
                a.add(kz, kz, az);
                a.add(k, kz, -az);
                let v = u.at(i, j);
                a.add(k, k, mass[j] * (q * v.powf(q - 1.0) - lambda * p * v.powf(p - 1.0)));
                rhs[k] = -mass[j] * fv.at(i, j);
            }
        }
        let Some(factor) = a.cholesky() else {
            factorization_failed = true;
            break;
        };
        factor.solve_factored(&mut rhs);

        let mut s = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut vals = u.values().to_vec();
            for i in 0..nz {
                for j in 0..nr {
                    let v = u.at(i, j);
                    let d = s * rhs[slot(i, j)];
                    let w = v.powf(q) + q * v.powf(q - 1.0) * d;
                    vals[grid.idx(i, j)] = if w > 0.0 { w.powf(1.0 / q).max(FLOOR) } else { (1e-3 * v).max(FLOOR) };
                }
            }
            let cand = Field::from_raw(&grid, vals);
            let cfv = first_variation(&cand, lambda, exps);
            let ce = phi(&cand);
            let cr = weighted_norm(&cfv);
            if ce.is_finite() && (ce < merit_e || cr < merit_r) {
                accepted = Some((cand, cfv, ce, cr));
                break;
            }
            s *= 0.5;
        }
        let Some((cand, cfv, ce, cr)) = accepted else {
            break;
        };
        u = cand;
        fv = cfv;
        merit_e = ce;
        merit_r = cr;
        res = fv.sup_interior();
    }
    NewtonOutcome { u, iterations: it, residual: res, factorization_failed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleave_neighbours_are_close() {
        for nz in [4, 6, 8, 64] {
            let pos = interleave(nz);
            let mut seen = pos.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..nz).collect::<Vec<_>>());
            for i in 0..nz {
                let d = pos[i].abs_diff(pos[(i + 1) % nz]);
                assert!(d <= 2, "nz = {nz}, i = {i}, d = {d}");
            }
        }
    }

    #[test]
    fn banded_cholesky_solves() {
        // Tridiagonal plus a band-2 coupling.
        let n = 7;
        let mut a = BandedSpd::zeros(n, 2);
        let mut dense = vec![vec![0.0; n]; n];
        for k in 0..n {
            a.add(k, k, 4.0 + k as f64);
            dense[k][k] += 4.0 + k as f64;
            if k >= 1 {
                a.add(k, k - 1, -1.0);
                dense[k][k - 1] -= 1.0;
                dense[k - 1][k] -= 1.0;
            }
            if k >= 2 {
                a.add(k, k - 2, 0.5);
                dense[k][k - 2] += 0.5;
                dense[k - 2][k] += 0.5;
            }
        }
        let x: Vec<f64> = (0..n).map(|k| (k as f64).sin() + 1.0).collect();
        let mut b: Vec<f64> = (0..n).map(|r| (0..n).map(|c| dense[r][c] * x[c]).sum()).collect();
        a.cholesky().unwrap().solve_factored(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = BandedSpd::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(0, 1, 2.0);
        assert!(a.cholesky().is_none());
    }
}
