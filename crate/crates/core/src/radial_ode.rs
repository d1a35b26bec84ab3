//! Shooting for the compactly supported radial profile of `−Δψ = ψ^p − ψ^q` in `ℝ^M`,
//! its rescaling to other λ and radii, and embedding into the cylinder grid.
//!
//! The ODE `ψ″ = −(M−1)/r·ψ′ − (|ψ|^{p−1}ψ − |ψ|^{q−1}ψ)` is integrated from
//! `ψ(0) = a`, `ψ′(0) = 0` with an adaptive Dormand–Prince 5(4) pair. Trajectories
//! end at the first of three events: `ψ′` turning non-negative (undershoot), `ψ`
//! crossing zero (overshoot), or `(ψ, ψ′)` entering the `tol`-ball (compacton).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShootClass {
    Compacton,
    Overshoot,
    Undershoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootOptions {
    /// Terminal residual tolerance relative to the initial height.
    pub tol_shoot: f64,
    /// Upper end of the height bracket.
    pub a_hi: f64,
    pub rtol: f64,
    /// Absolute integrator tolerance relative to the initial height.
    pub atol: f64,
    pub r_max: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self { tol_shoot: 1e-8, a_hi: 1e3, rtol: 1e-12, atol: 1e-16, r_max: 1e4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub r: f64,
    pub psi: f64,
    pub dpsi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootResult {
    pub a: f64,
    pub dim: usize,
    pub q: f64,
    pub p: f64,
    /// Radius of the terminal event; the support radius `R_M` for a compacton.
    pub r_m: f64,
    pub profile: Vec<ProfilePoint>,
    pub classification: ShootClass,
    pub residual_psi: f64,
    pub residual_dpsi: f64,
    /// `ψ″(0)` used for the first step.
    pub curvature0: f64,
    /// False for `M ∈ {1, 2}`, which lie outside the dimensions covered by the
    /// uniqueness theory for compactons.
    pub within_uniqueness_range: bool,
}

fn validate(q: f64, p: f64, dim: usize) -> Result<()> {
    if !(0.0 < q && q < p && p < 1.0) {
        return Err(Error::InvalidParameter(format!("need 0 < q < p < 1, got q = {q}, p = {p}")));
    }
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension M must be >= 1".into()));
    }
    Ok(())
}

#[inline]
fn spow(v: f64, e: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum() * v.abs().powf(e)
    }
}

#[derive(Clone, Copy)]
struct Ode {
    q: f64,
    p: f64,
    m1: f64,
    dim: f64,
}

impl Ode {
    fn f(&self, psi: f64) -> f64 {
        spow(psi, self.p) - spow(psi, self.q)
    }

    fn rhs(&self, r: f64, y: [f64; 2]) -> [f64; 2] {
        let acc = if r == 0.0 { -self.f(y[0]) / self.dim } else { -self.m1 / r * y[1] - self.f(y[0]) };
        [y[1], acc]
    }

    /// One Dormand–Prince step; returns the 5th-order solution and the error estimate.
    fn step(&self, r: f64, y: [f64; 2], h: f64) -> ([f64; 2], [f64; 2]) {
        const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
        const A: [[f64; 6]; 7] = [
            [0.0; 6],
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
        const B4: [f64; 7] = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        let mut k = [[0.0; 2]; 7];
        for s in 0..7 {
            let mut ys = y;
            for (m, km) in k.iter().enumerate().take(s) {
                ys[0] += h * A[s][m] * km[0];
                ys[1] += h * A[s][m] * km[1];
            }
            k[s] = self.rhs(r + C[s] * h, ys);
        }
        let mut y5 = y;
        let mut err = [0.0; 2];
        for s in 0..7 {
            for c in 0..2 {
                y5[c] += h * B5[s] * k[s][c];
                err[c] += h * (B5[s] - B4[s]) * k[s][c];
            }
        }
        (y5, err)
    }
}

struct Trajectory {
    points: Vec<ProfilePoint>,
    class: ShootClass,
    end: ProfilePoint,
}

fn integrate(ode: &Ode, a: f64, tol: f64, opts: &ShootOptions) -> Result<Trajectory> {
    let atol = opts.atol * a.max(1.0);
    let mut r = 0.0;
    let mut y = [a, 0.0];
    let mut h = 1e-3;
    let mut points = vec![ProfilePoint { r, psi: a, dpsi: 0.0 }];
    let norm = |y: [f64; 2]| (y[0] * y[0] + y[1] * y[1]).sqrt();
    loop {
        if r > opts.r_max {
            return Err(Error::Integrator(format!("no terminal event before r = {}", opts.r_max)));
        }
        let (y1, e) = ode.step(r, y, h);
        let sc0 = atol + opts.rtol * y[0].abs().max(y1[0].abs());
        let sc1 = atol + opts.rtol * y[1].abs().max(y1[1].abs());
        let err = ((e[0] / sc0).powi(2) + (e[1] / sc1).powi(2)).sqrt() / std::f64::consts::SQRT_2;
        if !err.is_finite() || err > 1.0 {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
            if !err.is_finite() {
                h *= 0.1;
            }
            if h < 1e-15 * r.max(1e-3) {
                return Err(Error::Integrator(format!("step size underflow at r = {r}")));
            }
            continue;
        }
        // Event detection on the accepted step. Events are located by bisection on
        // the fraction of the step.
        let event = if y1[0] < 0.0 {
            Some(0usize)
        } else if r > 0.0 && y1[1] >= 0.0 {
            Some(1)
        } else if norm(y1) <= tol {
            Some(2)
        } else {
            None
        };
        if let Some(kind) = event {
            let test = |yy: [f64; 2]| match kind {
                0 => yy[0] < 0.0,
                1 => yy[1] >= 0.0,
                _ => norm(yy) <= tol,
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if test(ode.step(r, y, mid * h).0) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let ye = ode.step(r, y, hi * h).0;
            let re = r + hi * h;
            let end = ProfilePoint { r: re, psi: ye[0], dpsi: ye[1] };
            points.push(end);
            let class = if norm(ye) <= tol {
                ShootClass::Compacton
            } else if kind == 0 {
                ShootClass::Overshoot
            } else {
                ShootClass::Undershoot
            };
            return Ok(Trajectory { points, class, end });
        }
        r += h;
        y = y1;
        points.push(ProfilePoint { r, psi: y[0], dpsi: y[1] });
        h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
    }
}

fn make_result(ode: &Ode, a: f64, dim: usize, traj: Trajectory) -> ShootResult {
    ShootResult {
        a,
        dim,
        q: ode.q,
        p: ode.p,
        r_m: traj.end.r,
        residual_psi: traj.end.psi.abs(),
        residual_dpsi: traj.end.dpsi.abs(),
        profile: traj.points,
        classification: traj.class,
        curvature0: -ode.f(a) / dim as f64,
        within_uniqueness_range: dim >= 3,
    }
}

fn ode_for(q: f64, p: f64, dim: usize) -> Ode {
    Ode { q, p, m1: dim as f64 - 1.0, dim: dim as f64 }
}

/// Integrates from height `a` until the first terminal event.
pub fn shoot(a: f64, dim: usize, q: f64, p: f64, opts: &ShootOptions) -> Result<ShootResult> {
    validate(q, p, dim)?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("initial height must be positive, got {a}")));
    }
    let ode = ode_for(q, p, dim);
    let traj = integrate(&ode, a, opts.tol_shoot * a, opts)?;
    Ok(make_result(&ode, a, dim, traj))
}

/// Bisects the initial height between undershoot and overshoot down to machine
/// precision and returns whichever end has the smaller terminal residual.
pub fn find_compacton(dim: usize, q: f64, p: f64, opts: &ShootOptions) -> Result<ShootResult> {
    validate(q, p, dim)?;
    let ode = ode_for(q, p, dim);
    // Sign-only classification during the bisection.
    let classify = |a: f64| integrate(&ode, a, 0.0, opts);
    let mut lo = 1.0 + 1e-9;
    let mut hi = opts.a_hi;
    let t_hi = classify(hi)?;
    if t_hi.class != ShootClass::Overshoot {
        return Err(Error::Bracket(format!("a_hi = {hi} does not overshoot")));
    }
    let t_lo = classify(lo)?;
    if t_lo.class != ShootClass::Undershoot {
        return Err(Error::Bracket(format!("a = {lo} does not undershoot")));
    }
    let (mut best_lo, mut best_hi) = (t_lo, t_hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let t = classify(mid)?;
        match t.class {
            ShootClass::Overshoot => {
                hi = mid;
                best_hi = t;
            }
            _ => {
                lo = mid;
                best_lo = t;
            }
        }
    }
    let res = |t: &Trajectory| (t.end.psi * t.end.psi + t.end.dpsi * t.end.dpsi).sqrt();
    let (a, mut traj) = if res(&best_lo) <= res(&best_hi) { (lo, best_lo) } else { (hi, best_hi) };
    let tol = opts.tol_shoot * a;
    traj.class = if res(&traj) <= tol {
        ShootClass::Compacton
    } else if a == hi {
        ShootClass::Overshoot
    } else {
        ShootClass::Undershoot
    };
    Ok(make_result(&ode, a, dim, traj))
}

impl ShootResult {
    /// `ψ, ψ′` at `r` by quintic Hermite interpolation of the adaptive profile,
    /// zero beyond the terminal radius.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let pts = &self.profile;
        if r >= self.r_m || r < 0.0 {
            return (0.0, 0.0);
        }
        let k = pts.partition_point(|pt| pt.r <= r).clamp(1, pts.len() - 1);
        let (a, b) = (pts[k - 1], pts[k]);
        let ode = ode_for(self.q, self.p, self.dim);
        let h = b.r - a.r;
        let acc0 = ode.rhs(a.r, [a.psi, a.dpsi])[1];
        let acc1 = ode.rhs(b.r, [b.psi, b.dpsi])[1];
        let t = (r - a.r) / h;
        let (t2, t3, t4, t5) = (t * t, t * t * t, t.powi(4), t.powi(5));
        let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
        let h3 = 0.5 * t3 - t4 + 0.5 * t5;
        let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let psi = h0 * a.psi + h1 * h * a.dpsi + h2 * h * h * acc0 + h3 * h * h * acc1 + h4 * h * b.dpsi + h5 * b.psi;
        let d0 = (-30.0 * t2 + 60.0 * t3 - 30.0 * t4) / h;
        let d1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
        let d2 = (t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4) * h;
        let d3 = (1.5 * t2 - 4.0 * t3 + 2.5 * t4) * h;
        let d4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
        let d5 = (30.0 * t2 - 60.0 * t3 + 30.0 * t4) / h;
        let dpsi = d0 * a.psi + d1 * a.dpsi + d2 * acc0 + d3 * acc1 + d4 * b.dpsi + d5 * b.psi;
        (psi, dpsi)
    }

    pub fn max_psi(&self) -> f64 {
        self.profile.iter().fold(0.0_f64, |m, pt| m.max(pt.psi))
    }

    /// `E = ψ′²/2 + ψ^{p+1}/(p+1) − ψ^{q+1}/(q+1)` at every stored point.
    pub fn first_integral(&self) -> Vec<f64> {
        self.profile
            .iter()
            .map(|pt| {
                let a = pt.psi.abs();
                0.5 * pt.dpsi * pt.dpsi + a.powf(self.p + 1.0) / (self.p + 1.0) - a.powf(self.q + 1.0) / (self.q + 1.0)
            })
            .collect()
    }
}

/// Scale data mapping the unit-λ compacton onto a ball of radius `R_target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescaling {
    pub sigma: f64,
    pub lambda_r: f64,
    /// Multiplier `A` in `u(r) = A·ψ(r/σ)`; `A^{1−q} = σ²`.
    pub amplitude_factor: f64,
    pub r_target: f64,
}

pub fn rescale(base: &ShootResult, r_target: f64) -> Result<Rescaling> {
    if !(r_target > 0.0 && r_target.is_finite()) {
        return Err(Error::InvalidParameter(format!("R_target must be positive, got {r_target}")));
    }
    Ok(rescaling_for(base.r_m, r_target, base.q, base.p))
}

/// `σ = R_target/R_M`, `λ_R = σ^{−2(p−q)/(1−q)}`, `A = σ^{2/(1−q)}`.
pub fn rescaling_for(r_m: f64, r_target: f64, q: f64, p: f64) -> Rescaling {
    let sigma = r_target / r_m;
    Rescaling {
        sigma,
        lambda_r: sigma.powf(-2.0 * (p - q) / (1.0 - q)),
        amplitude_factor: sigma.powf(2.0 / (1.0 - q)),
        r_target,
    }
}

/// Threshold `(R_M/R)^{2(p−q)/(1−q)}` above which the compacton fits in `B_R`.
pub fn lambda_star_ball(r_m: f64, r: f64, q: f64, p: f64) -> f64 {
    (r_m / r).powf(2.0 * (p - q) / (1.0 - q))
}

impl Rescaling {
    /// `(u, u′)` of the rescaled profile at radius `r`.
    pub fn eval(&self, base: &ShootResult, r: f64) -> (f64, f64) {
        let (psi, dpsi) = base.eval(r / self.sigma);
        (self.amplitude_factor * psi, self.amplitude_factor * dpsi / self.sigma)
    }
}

/// z-constant field sampling the rescaled compacton; zero for `r ≥ R_target`.
pub fn embed(base: &ShootResult, r_target: f64, grid: &Arc<Grid>) -> Result<Field> {
    if r_target > grid.geometry().r_omega() {
        return Err(Error::InvalidParameter(format!(
            "R_target = {r_target} exceeds the ball radius {}",
            grid.geometry().r_omega()
        )));
    }
    if base.dim != grid.geometry().dim() {
        return Err(Error::InvalidParameter(format!(
            "profile dimension {} does not match grid dimension {}",
            base.dim,
            grid.geometry().dim()
        )));
    }
    let sc = rescale(base, r_target)?;
    let col: Vec<f64> = (0..=grid.nr()).map(|j| if j == grid.nr() { 0.0 } else { sc.eval(base, grid.r(j)).0 }).collect();
    let mut values = vec![0.0; grid.len()];
    for i in 0..grid.nz() {
        values[grid.idx(i, 0)..=grid.idx(i, grid.nr())].copy_from_slice(&col);
    }
    Field::from_values(grid, values)
}
