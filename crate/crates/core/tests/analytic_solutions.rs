use kdv_galerkin::analytic::{eval_one_soliton, eval_two_soliton, kdv_residual};
use kdv_galerkin::diagnostics::error_percent;
use kdv_galerkin::quadrature::QuadratureRule;
use kdv_galerkin::spline::{project_l2, SplineFunction, SplineSpace};
use proptest::prelude::*;

fn mass(u: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let rule = QuadratureRule::gauss_legendre(20);
    let n = 400;
    let h = (b - a) / n as f64;
    (0..n).map(|i| rule.integrate(a + i as f64 * h, a + (i + 1) as f64 * h, &u)).sum()
}

fn maxima_above(f: impl Fn(f64) -> f64, a: f64, b: f64, frac: f64) -> Vec<f64> {
    let n = 8000;
    let xs: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let peak = ys.iter().copied().fold(f64::MIN, f64::max);
    (1..n).filter(|&i| ys[i] > ys[i - 1] && ys[i] >= ys[i + 1] && ys[i] > frac * peak).map(|i| xs[i]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn one_soliton_residual_is_small(x in -6.0..6.0f64, t in -1.0..1.0f64) {
        let r = kdv_residual(eval_one_soliton, x, t);
        prop_assert!(r.abs() <= 1e-4 * 81.0, "{r}");
    }

    #[test]
    fn two_soliton_residual_is_small(x in -15.0..15.0f64, t in -3.0..3.0f64) {
        let u = |x: f64, t: f64| eval_two_soliton(x, t, 0.5, 1.0).unwrap();
        let r = kdv_residual(u, x, t);
        prop_assert!(r.abs() <= 1e-3, "{r}");
    }

    #[test]
    fn error_percent_is_scale_invariant(alpha in 0.01..100.0f64) {
        let space = SplineSpace::periodic(-10.0, 10.0, 32).unwrap();
        let f = |x: f64| eval_one_soliton(x, 0.0);
        let u = project_l2(&space, f).unwrap();
        let scaled = SplineFunction::new(space, u.coeffs().iter().map(|c| alpha * c).collect()).unwrap();
        let e1 = error_percent(f, &u).unwrap();
        let e2 = error_percent(|x| alpha * f(x), &scaled).unwrap();
        prop_assert!((e1 - e2).abs() <= 1e-9 * e1.max(1e-12));
    }
}

#[test]
fn one_soliton_conserves_mass() {
    let m0 = mass(|x| eval_one_soliton(x, 0.0), -40.0, 40.0);
    let m1 = mass(|x| eval_one_soliton(x, 3.0), -40.0, 40.0);
    assert!(m0 > 0.0 && (m0 - m1).abs() <= 1e-10 * m0);
}

#[test]
fn two_soliton_separates_before_and_after_collision() {
    for t in [-10.0, 10.0] {
        let peaks = maxima_above(|x| eval_two_soliton(x, t, 0.5, 1.0).unwrap(), -40.0, 40.0, 0.05);
        assert_eq!(peaks.len(), 2, "t = {t}: {peaks:?}");
    }
    let before = mass(|x| eval_two_soliton(x, -10.0, 0.5, 1.0).unwrap(), -60.0, 60.0);
    let after = mass(|x| eval_two_soliton(x, 10.0, 0.5, 1.0).unwrap(), -60.0, 60.0);
    assert!((before - after).abs() <= 1e-8 * before);
}

#[test]
fn non_solution_has_large_residual() {
    let r = kdv_residual(|x, _| (x * 0.5).sin(), 0.3, 0.0);
    assert!(r.abs() > 1e-2);
}
