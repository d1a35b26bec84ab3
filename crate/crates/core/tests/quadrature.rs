//! Quadrature accuracy and the algebraic properties of the scalar functionals.

use std::f64::consts::PI;
use std::sync::Arc;

use compacton::functionals::{energy, fiber_phi1, fiber_phi2, pohozaev, IntegralBundle};
use compacton::mesh::{d_z, integrals, Exponents, Field, Geometry, Grid};
use proptest::prelude::*;

fn grid(t: f64, r: f64, n: usize, nz: usize, nr: usize) -> Arc<Grid> {
    Grid::new(Geometry::new(t, r, n).unwrap(), nz, nr).unwrap()
}

const Q: f64 = 0.1;
const P: f64 = 0.2;

fn test_field(g: &Arc<Grid>) -> Field {
    Field::from_fn(g, |z, r| (1.0 - r) * (1.0 + (PI * z).cos()))
}

/// Dense midpoint rule on `[a, b]`.
fn midpoint(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|k| f(a + (k as f64 + 0.5) * h)).sum::<f64>() * h
}

/// The integrals of `(1 − r)(1 + cos πz)` on `N = 3`, `T = R = 1`, which separate
/// into radial and axial factors.
fn oracle() -> [f64; 4] {
    let area = 4.0 * PI;
    // ∫₀¹ (1 − r)^a r² dr = 2/((a+1)(a+2)(a+3)).
    let beta = |a: f64| 2.0 / ((a + 1.0) * (a + 2.0) * (a + 3.0));
    let axial = |e: f64| midpoint(-1.0, 1.0, 1_000_000, |z| (1.0 + (PI * z).cos()).powf(e));
    let i_x = area * axial(2.0) / 3.0;
    let i_z = area * beta(2.0) * midpoint(-1.0, 1.0, 1_000_000, |z| (PI * (PI * z).sin()).powi(2));
    let s_q = area * beta(Q + 1.0) * axial(Q + 1.0);
    let s_p = area * beta(P + 1.0) * axial(P + 1.0);
    [i_x, i_z, s_q, s_p]
}

fn parts(b: &IntegralBundle) -> [f64; 4] {
    [b.i_x, b.i_z, b.s_q, b.s_p]
}

#[test]
fn integrals_match_separable_oracle_at_128() {
    let exact = oracle();
    // Closed forms for the gradient parts.
    assert!((exact[0] - 4.0 * PI).abs() < 1e-9);
    assert!((exact[1] - 4.0 * PI * PI * PI / 30.0).abs() < 1e-9);
    let g = grid(1.0, 1.0, 3, 128, 128);
    let b = integrals(&test_field(&g), Q, P);
    for (name, (got, want)) in ["I_x", "I_z", "S_q", "S_p"].iter().zip(parts(&b).iter().zip(exact)) {
        let rel = (got - want).abs() / want;
        assert!(rel < 1e-3, "{name}: {got} vs {want} (rel {rel:.2e})");
    }
}

/// A field whose powers `|u|^{q+1}`, `|u|^{p+1}` stay smooth up to the Dirichlet
/// boundary, so that every integrand is smooth.
fn smooth_power_field(g: &Arc<Grid>) -> Field {
    Field::from_fn(g, |z, r| (1.0 - r * r).powi(4) * (2.0 + (PI * z).cos()))
}

fn smooth_power_oracle() -> [f64; 4] {
    let area = 4.0 * PI;
    let n = 1_000_000;
    let radial = |f: &dyn Fn(f64) -> f64| midpoint(0.0, 1.0, n, |r| f(r) * r * r);
    let axial = |f: &dyn Fn(f64) -> f64| midpoint(-1.0, 1.0, n, f);
    let w = |r: f64| 1.0 - r * r;
    let i_x = area * radial(&|r| (8.0 * r * w(r).powi(3)).powi(2)) * axial(&|z| (2.0 + (PI * z).cos()).powi(2));
    let i_z = area * radial(&|r| w(r).powi(8)) * axial(&|z| (PI * (PI * z).sin()).powi(2));
    let s = |e: f64| area * radial(&|r| w(r).powf(4.0 * e)) * axial(&|z| (2.0 + (PI * z).cos()).powf(e));
    [i_x, i_z, s(Q + 1.0), s(P + 1.0)]
}

#[test]
fn quadrature_converges_at_second_order() {
    let exact = smooth_power_oracle();
    let sizes = [32usize, 64, 128];
    let errs: Vec<[f64; 4]> = sizes
        .iter()
        .map(|&n| {
            let g = grid(1.0, 1.0, 3, n, n);
            let b = parts(&integrals(&smooth_power_field(&g), Q, P));
            std::array::from_fn(|k| (b[k] - exact[k]).abs())
        })
        .collect();
    let h: Vec<f64> = sizes.iter().map(|&n| 1.0 / n as f64).collect();
    for k in 0..4 {
        let e: Vec<f64> = errs.iter().map(|e| e[k]).collect();
        let order = compacton::pohozaev_check::fit_order(&h, &e).unwrap();
        assert!(order >= 1.8, "integral {k}: errors {e:?}, order {order:.3}");
    }
}

#[test]
fn z_constant_fields_have_no_axial_gradient() {
    let g = grid(1.0, 1.0, 3, 16, 16);
    let u = Field::from_fn(&g, |_, r| 1.0 - r * r);
    let b = integrals(&u, Q, P);
    assert_eq!(b.i_z, 0.0);
    assert_eq!(integrals(&Field::zeros(&g), Q, P), IntegralBundle::zero());
}

fn smooth_field(g: &Arc<Grid>, c: [f64; 3]) -> Field {
    let t = g.geometry().half_period();
    Field::from_fn(g, move |z, r| (1.0 - r * r) * (c[0] + c[1] * (PI * z / t).cos() + c[2] * (2.0 * PI * z / t).sin()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integrals_scale_homogeneously(
        c0 in 0.5f64..2.0, c1 in -0.4f64..0.4, c2 in -0.4f64..0.4,
        s in prop::sample::select(vec![0.5, 2.0, 10.0]),
    ) {
        let g = grid(1.0, 1.0, 4, 8, 12);
        let u = smooth_field(&g, [c0, c1, c2]);
        let b = integrals(&u, Q, P);
        let bs = integrals(&u.scaled(s), Q, P);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-14 * b.abs();
        prop_assert!(close(bs.i_x, s * s * b.i_x));
        prop_assert!(close(bs.i_z, s * s * b.i_z));
        prop_assert!(close(bs.s_q, s.powf(Q + 1.0) * b.s_q));
        prop_assert!(close(bs.s_p, s.powf(P + 1.0) * b.s_p));
    }

    #[test]
    fn d_z_commutes_with_one_cell_shift(c0 in 0.5f64..2.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, k in 0usize..8) {
        let g = grid(0.7, 1.3, 3, 8, 6);
        let u = smooth_field(&g, [c0, c1, c2]);
        let a = d_z(&u.shift_z(k));
        let b = d_z(&u).shift_z(k);
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn integrals_are_invariant_under_z_shift(c0 in 0.5f64..2.0, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, k in 0usize..8) {
        let g = grid(1.0, 1.0, 3, 8, 6);
        let u = smooth_field(&g, [c0, c1, c2]);
        let a = integrals(&u, Q, P);
        let b = integrals(&u.shift_z(k), Q, P);
        for (x, y) in parts(&a).iter().zip(parts(&b)) {
            prop_assert!((x - y).abs() <= 1e-13 * y.abs().max(1e-300));
        }
    }

    /// Along a ray, wherever `Φ′(tu) ≤ 0` the Pohozaev functional decreases.
    #[test]
    fn pohozaev_decreases_where_fiber_slope_is_nonpositive(
        q in 0.01f64..0.8, dp in 0.01f64..0.19, n in 3usize..=10,
        lx in -2.0f64..2.0, lz in -2.0f64..2.0, lq in -2.0f64..2.0, lp in -2.0f64..2.0,
        lambda in 0.1f64..10.0, lt in -3.0f64..3.0,
    ) {
        let p = q + dp;
        let e = Exponents::new(q, p, n).unwrap();
        let b = IntegralBundle::new(10f64.powf(lx), 10f64.powf(lz), 10f64.powf(lq), 10f64.powf(lp));
        let t = 10f64.powf(lt);
        let bt = b.scaled(t, q, p);
        prop_assume!(fiber_phi1(&bt, lambda) <= 0.0);
        let analytic = fiber_phi1(&bt, lambda) / t - 2.0 * t * b.i_x / n as f64;
        prop_assert!(analytic < 0.0);
        let h = 1e-6 * t;
        let fd = (pohozaev(&b.scaled(t + h, q, p), lambda, &e) - pohozaev(&b.scaled(t - h, q, p), lambda, &e)) / (2.0 * h);
        let mag = (bt.i2 + lambda * bt.s_p + bt.s_q) / t;
        prop_assert!((fd - analytic).abs() <= 1e-6 * mag, "fd {fd}, analytic {analytic}");
    }

    /// On the Nehari set with `P ≤ 0` and `d* > 0`, the fiber is convex.
    #[test]
    fn nehari_points_with_nonpositive_pohozaev_are_fiber_minima(
        q in 0.001f64..0.5, dp in 0.001f64..0.5, n in 3usize..=12,
        lx in -3.0f64..3.0, lz in -3.0f64..3.0, lq in -3.0f64..3.0, ll in -2.0f64..2.0,
    ) {
        let p = (q + dp).min(0.999);
        prop_assume!(p > q);
        let e = Exponents::new(q, p, n).unwrap();
        prop_assume!(e.in_es());
        let (ix, iz, sq, lambda) = (10f64.powf(lx), 10f64.powf(lz), 10f64.powf(lq), 10f64.powf(ll));
        let b = IntegralBundle::new(ix, iz, sq, (ix + iz + sq) / lambda);
        prop_assume!(pohozaev(&b, lambda, &e) <= 0.0);
        prop_assert!(fiber_phi2(&b, lambda, &e) > 0.0);
    }

    #[test]
    fn energy_minus_pohozaev_is_ix_over_n(
        lx in -3.0f64..3.0, lz in -3.0f64..3.0, lq in -3.0f64..3.0, lp in -3.0f64..3.0, lambda in 0.01f64..100.0,
    ) {
        let e = Exponents::new(Q, P, 4).unwrap();
        let b = IntegralBundle::new(10f64.powf(lx), 10f64.powf(lz), 10f64.powf(lq), 10f64.powf(lp));
        let lhs = energy(&b, lambda, &e) - pohozaev(&b, lambda, &e);
        let mag = b.i2 / 2.0 + lambda * b.s_p / (P + 1.0) + b.s_q / (Q + 1.0);
        prop_assert!((lhs - b.i_x / 4.0).abs() <= 1e-14 * mag);
    }
}
