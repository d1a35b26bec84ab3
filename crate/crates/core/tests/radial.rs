//! Shooting, rescaling and embedding of radial compactons.

use std::f64::consts::PI;

use compacton::functionals::energy;
use compacton::mesh::{integrals, unit_sphere_area, Exponents, Geometry, Grid};
use compacton::radial_ode::{embed, find_compacton, lambda_star_ball, rescale, shoot, ShootClass, ShootOptions};

#[test]
fn one_dimensional_profile_obeys_first_integral() {
    let r = find_compacton(1, 0.5, 0.75, &ShootOptions::default()).unwrap();
    assert_eq!(r.classification, ShootClass::Compacton);
    // E = 0 at the top gives ψ^{p−q} = (p+1)/(q+1).
    let top = (1.75f64 / 1.5).powf(1.0 / 0.25);
    assert!((r.max_psi() - top).abs() < 1e-6);
    assert!((r.max_psi() - 1.852623).abs() < 1e-4);
    assert!(r.first_integral().iter().all(|e| e.abs() < 1e-8));
}

#[test]
fn energy_decreases_along_profiles_in_higher_dimensions() {
    for dim in [2, 3, 4] {
        let r = find_compacton(dim, 0.1, 0.2, &ShootOptions::default()).unwrap();
        let e = r.first_integral();
        let scale = e.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-10 * scale), "M = {dim}");
    }
}

#[test]
fn support_radius_is_converged_in_the_tolerance() {
    let opts = ShootOptions::default();
    let a = find_compacton(3, 0.1, 0.2, &opts).unwrap();
    let b = find_compacton(3, 0.1, 0.2, &ShootOptions { rtol: opts.rtol / 2.0, atol: opts.atol / 2.0, ..opts }).unwrap();
    assert!((a.r_m - b.r_m).abs() < 1e-6 * a.r_m);
    assert!(a.residual_psi <= 1e-8 * a.a && a.residual_dpsi <= 1e-8 * a.a);
}

#[test]
fn ball_threshold_decreases_with_radius() {
    let r = find_compacton(4, 0.1, 0.2, &ShootOptions::default()).unwrap();
    let mut prev = f64::INFINITY;
    let mut radius = 4.0;
    for _ in 0..40 {
        let l = lambda_star_ball(r.r_m, radius, 0.1, 0.2);
        assert!(l > 0.0);
        if prev.is_finite() {
            assert!(l > prev, "λ_R must grow as the radius shrinks");
        }
        prev = l;
        radius /= 3.0;
    }
    assert!(prev > 1e2);
    let sc = rescale(&r, r.r_m).unwrap();
    assert_eq!((sc.sigma, sc.lambda_r, sc.amplitude_factor), (1.0, 1.0, 1.0));
    let half = rescale(&r, r.r_m / 2.0).unwrap();
    assert!((half.lambda_r - 2f64.powf(2.0 / 9.0)).abs() < 1e-14);
    assert!((half.lambda_r - 1.166529).abs() < 1e-6);
}

/// Below the ball threshold `λ*(B₁)` the Dirichlet problem on `B₁` still has
/// positive radial solutions: overshooting profiles first vanish at radii below
/// `R_M`, so their rescaled λ is smaller than `λ*(B₁)`.
#[test]
fn overshooting_profiles_give_dirichlet_solutions_below_ball_threshold() {
    let (q, p, dim) = (0.1, 0.2, 4);
    let opts = ShootOptions::default();
    let c = find_compacton(dim, q, p, &opts).unwrap();
    let threshold = lambda_star_ball(c.r_m, 1.0, q, p);
    assert!((threshold - 1.95607482).abs() < 1e-7, "λ*(B₁) = {threshold}");
    let mut best = f64::INFINITY;
    for k in 1..=400 {
        let a = c.a * (1.0 + 1e-3 * k as f64);
        let s = shoot(a, dim, q, p, &opts).unwrap();
        assert_eq!(s.classification, ShootClass::Overshoot, "a = {a}");
        best = best.min(lambda_star_ball(s.r_m, 1.0, q, p));
    }
    assert!(best < threshold);
    assert!((best - 1.94532897).abs() < 1e-5, "turning point at λ = {best}");
}

/// Energy of the rescaled profile on `(−T, T) × B_R` by a dense midpoint rule in r.
fn radial_energy(base: &compacton::radial_ode::ShootResult, r_target: f64, t: f64, lambda: f64, q: f64, p: f64) -> f64 {
    let sc = rescale(base, r_target).unwrap();
    let n = 400_000;
    let h = r_target / n as f64;
    let dim = base.dim as i32;
    let mut acc = 0.0;
    for k in 0..n {
        let r = (k as f64 + 0.5) * h;
        let (u, du) = sc.eval(base, r);
        let u = u.abs();
        acc += (0.5 * du * du - lambda * u.powf(p + 1.0) / (p + 1.0) + u.powf(q + 1.0) / (q + 1.0)) * r.powi(dim - 1);
    }
    2.0 * t * unit_sphere_area(base.dim) * acc * h
}

#[test]
fn embedded_energy_matches_radial_quadrature() {
    let (q, p) = (0.1, 0.2);
    for (dim, r_target) in [(3usize, 0.8), (4, 0.6)] {
        let base = find_compacton(dim, q, p, &ShootOptions::default()).unwrap();
        let lambda = rescale(&base, r_target).unwrap().lambda_r;
        let g = Grid::new(Geometry::new(1.0, 1.0, dim).unwrap(), 8, 128).unwrap();
        let u = embed(&base, r_target, &g).unwrap();
        let e = Exponents::new(q, p, dim).unwrap();
        let got = energy(&integrals(&u, q, p), lambda, &e);
        let want = radial_energy(&base, r_target, 1.0, lambda, q, p);
        assert!(((got - want) / want).abs() < 5e-3, "M = {dim}: grid {got} vs quadrature {want}");
    }
    assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-14);
}
