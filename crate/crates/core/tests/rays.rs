//! Scale factors, quotients and Nehari roots along rays.

use std::f64::consts::PI;
use std::sync::Arc;

use compacton::fibering::{nehari_roots, project_ray, project_to_m};
use compacton::functionals::{fiber_phi1, pohozaev, IntegralBundle};
use compacton::mesh::{integrals, Exponents, Field, Geometry, Grid};
use compacton::rayleigh::{lambda0_of, lambda1p_of, quotients, scale_factors};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn log_grid(n: usize, lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(move |k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
}

/// Grid-search argmin and min of `f` on a 10⁶-point log grid over `[1e-4, 1e2]`.
fn grid_min(f: impl Fn(f64) -> f64) -> (f64, f64) {
    log_grid(1_000_000, 1e-4, 1e2).map(|t| (t, f(t))).fold((f64::NAN, f64::INFINITY), |m, (t, v)| if v < m.1 { (t, v) } else { m })
}

fn unit_bundle() -> (IntegralBundle, Exponents) {
    (IntegralBundle::new(1.0, 0.0, 1.0, 1.0), Exponents::new(0.1, 0.2, 4).unwrap())
}

#[test]
fn unit_bundle_scale_factors_match_grid_search() {
    let (b, e) = unit_bundle();
    let f = scale_factors(&b, &e).unwrap();
    let (t0, l0) = grid_min(|t| quotients(&b, t, &e).unwrap().0);
    let (t1, l1) = grid_min(|t| quotients(&b, t, &e).unwrap().1);
    assert!(rel(f.t0, t0) < 1e-4 && rel(f.lambda0_u, l0) < 1e-10, "{f:?} vs {t0} {l0}");
    assert!(rel(f.t1, t1) < 1e-4 && rel(f.lambda1_u, l1) < 1e-10, "{f:?} vs {t1} {l1}");
    // Frozen from the closed forms above, which the grid search confirms.
    assert!((f.t0 - 0.19277583).abs() < 1e-8, "t0 = {}", f.t0);
    assert!((f.t1 - 0.09921256).abs() < 1e-8, "t1 = {}", f.t1);
    assert!((f.lambda0_u - 1.44689).abs() < 1e-5, "λ0(u) = {}", f.lambda0_u);
    assert!((f.lambda1_u - 1.417411).abs() < 1e-6, "λ1(u) = {}", f.lambda1_u);
    // λ₁(u) = t1^{0.8} + t1^{-0.1} for this bundle.
    assert!(rel(f.lambda1_u, f.t1.powf(0.8) + f.t1.powf(-0.1)) < 1e-14);
}

#[test]
fn unit_bundle_intersection_matches_sign_change() {
    let (b, e) = unit_bundle();
    let f = scale_factors(&b, &e).unwrap();
    let diff = |t: f64| {
        let (_, r1, rp) = quotients(&b, t, &e).unwrap();
        rp - r1
    };
    let ts: Vec<f64> = log_grid(1_000_000, 1e-4, 1e2).collect();
    let k = ts.windows(2).position(|w| diff(w[0]) > 0.0 && diff(w[1]) <= 0.0).unwrap();
    assert!(rel(f.t1p, ts[k + 1]) < 1e-4);
    let (_, r1, rp) = quotients(&b, f.t1p, &e).unwrap();
    assert!(rel(r1, rp) < 1e-10);
    // Frozen: t1P^{0.9} = 0.1/(1.1·0.7).
    assert!((f.t1p - (0.1f64 / 0.77).powf(1.0 / 0.9)).abs() < 1e-15);
    assert!((f.t1p - 0.10351667).abs() < 1e-8, "t1P = {}", f.t1p);
    assert!((f.lambda1p_u - 1.41751446).abs() < 1e-8, "λ1P(u) = {}", f.lambda1p_u);
    assert!(rel(f.lambda1p_u, f.t1p.powf(0.8) + f.t1p.powf(-0.1)) < 1e-14);
}

#[test]
fn t0_is_one_when_bracket_is_one() {
    let e = Exponents::new(0.1, 0.2, 4).unwrap();
    let sq = (1.0 - 0.2) * 1.1 / (2.0 * 0.1);
    let f = scale_factors(&IntegralBundle::new(1.0, 0.0, sq, 1.0), &e).unwrap();
    assert!((f.t0 - 1.0).abs() < 1e-14);
}

#[test]
fn nehari_roots_on_unit_bundle() {
    let (b, e) = unit_bundle();
    let b = IntegralBundle { i2: 1.0, ..b };
    assert_eq!(nehari_roots(&b, 1.0, &e, 1e-12).unwrap().t_tilde, None);
    let lmin = scale_factors(&b, &e).unwrap().lambda1_u;
    let double = nehari_roots(&b, lmin, &e, 1e-12).unwrap();
    assert!((double.t_star.unwrap() - 0.099213).abs() < 1e-6);
    assert_eq!(double.t_star, double.t_tilde);
    let two = nehari_roots(&b, 2.0, &e, 1e-12).unwrap();
    let (ts, tt) = (two.t_star.unwrap(), two.t_tilde.unwrap());
    assert!(ts < double.t_star.unwrap() && double.t_star.unwrap() < tt);
    // Dense sign scan of g(t) over [1e-6, 1e3] finds exactly these two roots.
    let g = |t: f64| t.powf(0.9) - 2.0 * t.powf(0.1) + 1.0;
    let pts: Vec<f64> = log_grid(200_000, 1e-6, 1e3).collect();
    let crossings: Vec<f64> = pts.windows(2).filter(|w| g(w[0]).signum() != g(w[1]).signum()).map(|w| w[1]).collect();
    assert_eq!(crossings.len(), 2);
    assert!(rel(crossings[0], ts) < 1e-4 && rel(crossings[1], tt) < 1e-4);
    for t in [ts, tt] {
        assert!(rel(quotients(&b, t, &e).unwrap().1, 2.0) < 1e-10);
    }
    let mut prev = tt;
    for lambda in [5.0, 10.0] {
        let t = nehari_roots(&b, lambda, &e, 1e-12).unwrap().t_tilde.unwrap();
        assert!(t > prev);
        prev = t;
    }
}

fn admissible() -> impl Strategy<Value = Exponents> {
    (0.001f64..0.6, 0.001f64..0.6, 3usize..=12).prop_filter_map("outside the admissible set", |(q, dp, n)| {
        let p = q + dp;
        if p >= 1.0 {
            return None;
        }
        Exponents::new(q, p, n).ok().filter(Exponents::in_es)
    })
}

fn bundle(range: f64) -> impl Strategy<Value = IntegralBundle> {
    (-range..range, -range..range, -range..range, -range..range)
        .prop_map(|(a, b, c, d)| IntegralBundle::new(10f64.powf(a), 10f64.powf(b), 10f64.powf(c), 10f64.powf(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn scale_factor_orderings(e in admissible(), b in bundle(2.0)) {
        let f = scale_factors(&b, &e).unwrap();
        prop_assert!(f.t1 < f.t1p && f.t1p < f.t0 && f.t1p < f.t_p, "{f:?}");
    }

    #[test]
    fn pohozaev_quotient_crosses_once_at_t1p(e in admissible(), b in bundle(2.0)) {
        let f = scale_factors(&b, &e).unwrap();
        for (k, t) in [0.5, 0.9, 1.1, 2.0].iter().map(|s| s * f.t1p).enumerate() {
            let (_, r1, rp) = quotients(&b, t, &e).unwrap();
            if k < 2 { prop_assert!(rp > r1) } else { prop_assert!(rp < r1) }
        }
        let (_, r1, rp) = quotients(&b, f.t1p, &e).unwrap();
        prop_assert!(rel(r1, rp) < 1e-10);
    }

    #[test]
    fn nehari_condition_is_r1_level(b in bundle(2.0), lambda in 0.5f64..20.0) {
        let e = Exponents::new(0.1, 0.2, 4).unwrap();
        if let Some(t) = nehari_roots(&b, lambda, &e, 1e-12).unwrap().t_tilde {
            let bt = b.scaled(t, 0.1, 0.2);
            prop_assert!(rel(quotients(&b, t, &e).unwrap().1, lambda) < 1e-10);
            prop_assert!(fiber_phi1(&bt, lambda).abs() < 1e-9 * (bt.i2 + bt.s_q));
        }
        // Conversely, choosing S_p from the Nehari condition puts R¹(u) at λ.
        let on = IntegralBundle::new(b.i_x, b.i_z, b.s_q, (b.i2 + b.s_q) / lambda);
        prop_assert!(fiber_phi1(&on, lambda).abs() <= 1e-14 * (on.i2 + on.s_q));
        prop_assert!(rel(quotients(&on, 1.0, &e).unwrap().1, lambda) < 1e-14);
    }

    #[test]
    fn quotient_values_are_scale_invariant(e in admissible(), b in bundle(2.0), s in prop::sample::select(vec![1e-3, 1.0, 1e3])) {
        let bs = b.scaled(s, e.q(), e.p());
        prop_assert!(rel(lambda0_of(&bs, &e).unwrap(), lambda0_of(&b, &e).unwrap()) < 1e-12);
        prop_assert!(rel(lambda1p_of(&bs, &e).unwrap(), lambda1p_of(&b, &e).unwrap()) < 1e-12);
    }

    /// At `λ₀(u)` the energy on the ray touches zero at `t₀`.
    #[test]
    fn zero_energy_level_at_t0(e in admissible(), b in bundle(1.0)) {
        let f = scale_factors(&b, &e).unwrap();
        let bt = b.scaled(f.t0, e.q(), e.p());
        let mag = bt.i2 + f.lambda0_u * bt.s_p + bt.s_q;
        prop_assert!(compacton::functionals::energy(&bt, f.lambda0_u, &e).abs() < 1e-10 * mag);
        prop_assert!(fiber_phi1(&bt, f.lambda0_u).abs() < 1e-10 * mag);
    }
}

fn random_smooth(rng: &mut ChaCha8Rng, g: &Arc<Grid>) -> Field {
    let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let k = rng.gen_range(1..4) as f64;
    Field::from_fn(g, move |z, r| {
        (1.0 - r * r) * (1.0 + c[0] * (PI * z).cos() + c[1] * (k * PI * z).sin()) * (1.0 + c[2] * r + c[3] * r * r)
    })
}

#[test]
fn projection_respects_the_pohozaev_sign() {
    let e = Exponents::new(0.1, 0.2, 4).unwrap();
    let g = Grid::new(Geometry::new(1.0, 1.0, 4).unwrap(), 16, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let v = random_smooth(&mut rng, &g);
        let b = integrals(&v, 0.1, 0.2);
        let l1p = lambda1p_of(&b, &e).unwrap();

        let below = 0.95 * l1p;
        assert!(project_ray(&b, below, &e, 1e-12).is_none());
        let roots = nehari_roots(&b, below, &e, 1e-12).unwrap();
        for t in [roots.t_star, roots.t_tilde].into_iter().flatten() {
            assert!(pohozaev(&b.scaled(t, 0.1, 0.2), below, &e) > 0.0);
        }

        let t = project_ray(&b, l1p * (1.0 + 1e-13), &e, 1e-12).unwrap();
        let t1p = scale_factors(&b, &e).unwrap().t1p;
        assert!(rel(t, t1p) < 1e-5, "t̃ = {t}, t1P = {t1p}");
        let bt = b.scaled(t, 0.1, 0.2);
        assert!(pohozaev(&bt, l1p, &e).abs() < 1e-5 * bt.scale());

        let t = project_ray(&b, 2.0 * l1p, &e, 1e-12).unwrap();
        assert!(pohozaev(&b.scaled(t, 0.1, 0.2), 2.0 * l1p, &e) < 0.0);
    }
}

#[test]
fn projection_is_invariant_under_ray_scaling() {
    let e = Exponents::new(0.1, 0.2, 4).unwrap();
    let g = Grid::new(Geometry::new(1.0, 1.0, 4).unwrap(), 16, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let v = random_smooth(&mut rng, &g);
        let lambda = 1.5 * lambda1p_of(&integrals(&v, 0.1, 0.2), &e).unwrap();
        let u = project_to_m(&v, lambda, &e, 1e-12).unwrap();
        for s in [0.5, 2.0] {
            let us = project_to_m(&v.scaled(s), lambda, &e, 1e-12).unwrap();
            let err = u.values().iter().zip(us.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-10 * u.max_abs(), "s = {s}: {err:e}");
        }
    }
}

#[test]
fn bundle_depends_on_magnitude_only() {
    let g = Grid::new(Geometry::new(1.0, 1.0, 4).unwrap(), 16, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let v = random_smooth(&mut rng, &g);
        assert_eq!(integrals(&v.scaled(-1.0), 0.1, 0.2), integrals(&v, 0.1, 0.2));
        assert_eq!(integrals(&v.scaled(-1.0).abs(), 0.1, 0.2), integrals(&v, 0.1, 0.2));
    }
}
