//! Invariant suites run by `kdv-galerkin verify`.
//!
//! Each suite draws its random inputs from a ChaCha stream seeded by the
//! caller, so a failing line can be reproduced with the same seed.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytic::{eval_one_soliton, eval_two_soliton, kdv_residual};
use crate::assembly::{assemble_dispersion, assemble_weighted_mass, identity_check};
use crate::linalg::{dot, BandedPeriodicMatrix, DenseLu, PeriodicLu};
use crate::quadrature::{integrate_cells, QuadratureRule, ERROR_NORM_ORDER};
use crate::spline::{SplineFunction, SplineSpace};
use crate::weight::WeightFunction;

/// Relative tolerance of the identity suite.
pub const IDENTITY_TOL: f64 = 1e-8;
/// `|cᵀ D c| ≤ tol ‖c‖²` for `φ ≡ 1`.
pub const UNIT_DISPERSION_TOL: f64 = 1e-10;
pub const SOLVE_TOL: f64 = 1e-10;
pub const ONE_SOLITON_RESIDUAL_TOL: f64 = 1e-4;
pub const TWO_SOLITON_RESIDUAL_TOL: f64 = 1e-3;
/// Allowed spread (max/min) of the empirical inverse-inequality constants
/// across meshes.
pub const INVERSE_SPREAD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {}/{}: {}", self.suite, self.name, self.detail)
    }
}

fn check(suite: &'static str, name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        suite,
        name: name.to_string(),
        passed,
        detail,
    }
}

/// All suites in a fixed order.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let mut out = identity_suite(seed, 100);
    out.extend(operator_suite(seed));
    out.extend(residual_suite(seed));
    out.extend(inverse_inequality_suite(seed, 100));
    out
}

fn random_coeffs(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// `∫ w_x (φ w)_xx` against `3/2 ∫ w_x² φ_x − 1/2 ∫ w² φ_xxx` for random
/// smoothed-ramp weights and random splines with zero slope at the seam.
pub fn identity_suite(seed: u64, pairs: usize) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (xl, xr) = (-10.0, 10.0);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..pairs {
        let m = [16, 24, 32, 40][rng.gen_range(0..4)];
        let radius = rng.gen_range(1.5..5.0);
        let width = rng.gen_range(0.5..2.0);
        let space = SplineSpace::periodic(xl, xr, m).expect("valid space");
        let weight = WeightFunction::smoothed_ramp(radius, width, xl, xr).expect("valid ramp");
        let mut c = random_coeffs(space.num_dofs(), &mut rng);
        c[1] = 0.0;
        let w = SplineFunction::new(space, c).expect("length");
        let (lhs, rhs) = identity_check(&space, &weight, &w);
        let scale = lhs.abs().max(rhs.abs());
        let rel = if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 };
        worst = worst.max(rel);
        if !(rel <= IDENTITY_TOL) {
            failures += 1;
        }
    }
    vec![check(
        "identity",
        "smoothed_ramp",
        failures == 0,
        format!("{pairs} random pairs, max relative difference {worst:.2e} (tol {IDENTITY_TOL:.0e}), {failures} failing"),
    )]
}

/// Smallest pivot of a dense Cholesky factorization, or `None` if it breaks
/// down.
pub fn cholesky_min_pivot(n: usize, a: &[f64]) -> Option<f64> {
    let mut l = vec![0.0; n * n];
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        min_pivot = min_pivot.min(d);
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(min_pivot)
}

/// Random diagonally dominant banded periodic matrix.
pub fn random_banded_system(n: usize, rng: &mut ChaCha8Rng) -> BandedPeriodicMatrix {
    let mut m = BandedPeriodicMatrix::zeros(n);
    for i in 0..n {
        for off in -3_i64..=3 {
            let j = (i as i64 + off).rem_euclid(n as i64) as usize;
            m.add(i, j, rng.gen_range(-1.0..1.0));
        }
        m.add(i, i, 8.0);
    }
    m
}

/// Weighted mass SPD, `φ ≡ 1` dispersion form, affine dispersion form on
/// functions away from the seam, banded solve against dense elimination.
pub fn operator_suite(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    let mut out = Vec::new();

    for m in [8, 16, 32] {
        let space = SplineSpace::periodic(-10.0, 10.0, m).expect("valid space");
        let weight = WeightFunction::experiment_default(-10.0, 10.0).expect("weight");
        let a = assemble_weighted_mass(&space, &weight);
        let n = a.dim();
        let pivot = cholesky_min_pivot(n, &a.to_dense());
        let asym = a.max_asymmetry();
        out.push(check(
            "operators",
            &format!("weighted_mass_spd_M{m}"),
            pivot.is_some() && asym <= 1e-13 * a.norm_inf(),
            match pivot {
                Some(p) => format!("Cholesky ok, min pivot {p:.3e}, asymmetry {asym:.1e}"),
                None => "Cholesky broke down".to_string(),
            },
        ));
    }

    let space = SplineSpace::periodic(-10.0, 10.0, 32).expect("valid space");
    let unit = WeightFunction::unit(-10.0, 10.0).expect("weight");
    let d = assemble_dispersion(&space, &unit);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let c = random_coeffs(space.num_dofs(), &mut rng);
        worst = worst.max(d.bilinear(&c, &c).abs() / dot(&c, &c));
    }
    out.push(check(
        "operators",
        "unit_weight_dispersion_form",
        worst <= UNIT_DISPERSION_TOL,
        format!("50 random c, max |cᵀDc|/‖c‖² = {worst:.2e} (tol {UNIT_DISPERSION_TOL:.0e})"),
    ));

    let weight = WeightFunction::experiment_default(-10.0, 10.0).expect("weight");
    let d = assemble_dispersion(&space, &weight);
    let rule = QuadratureRule::gauss_legendre(ERROR_NORM_ORDER);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let c = interior_coeffs(&space, &mut rng);
        let u = SplineFunction::new(space, c.clone()).expect("length");
        let exact = 1.5
            * integrate_cells(&space, &rule, |cell, s| u.local_values(cell, s)[1].powi(2));
        let form = d.bilinear(&c, &c);
        worst = worst.max((form - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
    }
    out.push(check(
        "operators",
        "affine_dispersion_form",
        worst <= 1e-10,
        format!("50 functions away from the seam, max relative gap to 3/2∫u_x² {worst:.2e}"),
    ));

    let n = 64;
    let m = random_banded_system(n, &mut rng);
    let b = random_coeffs(n, &mut rng);
    let (x_band, x_dense) = match (PeriodicLu::new(&m), DenseLu::new(n, m.to_dense())) {
        (Ok(lu), Ok(dense)) => (lu.solve(&b), dense.solve(&b)),
        (Err(e), _) | (_, Err(e)) => {
            out.push(check("operators", "banded_vs_dense_n64", false, e.to_string()));
            return out;
        }
    };
    let diff = x_band
        .iter()
        .zip(&x_dense)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    out.push(check(
        "operators",
        "banded_vs_dense_n64",
        diff <= SOLVE_TOL,
        format!("max |x_band − x_dense| = {diff:.2e} (tol {SOLVE_TOL:.0e})"),
    ));
    out
}

/// Random coefficients that vanish on the nodes within two cells of the
/// seam.
pub fn interior_coeffs(space: &SplineSpace, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let m = space.num_nodes();
    let mut c = random_coeffs(space.num_dofs(), rng);
    for j in (0..=2).chain(m - 2..m) {
        c[2 * j] = 0.0;
        c[2 * j + 1] = 0.0;
    }
    c
}

/// Finite-difference KdV residuals of the closed-form solutions.
pub fn residual_suite(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0002);
    let mut worst1: f64 = 0.0;
    for _ in 0..100 {
        let (x, t) = (rng.gen_range(-10.0..10.0), rng.gen_range(-1.0..1.0));
        worst1 = worst1.max(kdv_residual(eval_one_soliton, x, t).abs());
    }
    let (a, b) = (0.5, 1.0);
    let mut worst2: f64 = 0.0;
    let mut taken = 0;
    while taken < 100 {
        let (x, t) = (rng.gen_range(-40.0..40.0), rng.gen_range(-10.0..10.0));
        // Stay off the ray z = 0 where the csch/coth form is singular.
        if ((b / 2.0_f64).sqrt() * (x - 2.0 * b * t)).abs() < 0.5 {
            continue;
        }
        let u = |x: f64, t: f64| eval_two_soliton(x, t, a, b).expect("valid parameters");
        worst2 = worst2.max(kdv_residual(u, x, t).abs());
        taken += 1;
    }
    vec![
        check(
            "residual",
            "one_soliton",
            worst1 <= ONE_SOLITON_RESIDUAL_TOL,
            format!("100 points, max |u_t + u u_x + u_xxx| = {worst1:.2e} (tol {ONE_SOLITON_RESIDUAL_TOL:.0e})"),
        ),
        check(
            "residual",
            "two_soliton",
            worst2 <= TWO_SOLITON_RESIDUAL_TOL,
            format!("100 points, max residual {worst2:.2e} (tol {TWO_SOLITON_RESIDUAL_TOL:.0e})"),
        ),
    ]
}

/// `(Δx^{1/2} ‖z_x‖_∞ / ‖z_x‖_{L²}, Δx^{3/2} ‖z_x‖_∞ / ‖z‖_{L²})`.
pub fn inverse_ratios(z: &SplineFunction) -> (f64, f64) {
    let space = z.space();
    let dx = space.dx();
    let mut sup: f64 = 0.0;
    for cell in 0..space.num_cells() {
        // z_x is quadratic on a cell: endpoints and the vertex suffice.
        let d0 = z.local_values(cell, 0.0)[1];
        let d1 = z.local_values(cell, 1.0)[1];
        sup = sup.max(d0.abs()).max(d1.abs());
        let (c0, c1) = (z.local_values(cell, 0.0)[2], z.local_values(cell, 1.0)[2]);
        if c0 != c1 {
            let s = c0 / (c0 - c1);
            if (0.0..=1.0).contains(&s) {
                sup = sup.max(z.local_values(cell, s)[1].abs());
            }
        }
    }
    let rule = QuadratureRule::gauss_legendre(ERROR_NORM_ORDER);
    let l2 = integrate_cells(space, &rule, |c, s| z.local_values(c, s)[0].powi(2)).sqrt();
    let l2x = integrate_cells(space, &rule, |c, s| z.local_values(c, s)[1].powi(2)).sqrt();
    (dx.sqrt() * sup / l2x, dx.powf(1.5) * sup / l2)
}

/// Empirical inverse-inequality constants over meshes of 16 to 128 cells.
/// Test functions are random combinations of the basis functions on a few
/// adjacent nodes, which is where the suprema are attained.
pub fn inverse_inequality_suite(seed: u64, samples: usize) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0003);
    let meshes = [16, 32, 64, 128];
    let mut consts = Vec::new();
    for m in meshes {
        let space = SplineSpace::periodic(0.0, 1.0, m).expect("valid space");
        let (mut c1, mut c2) = (0.0_f64, 0.0_f64);
        for _ in 0..samples {
            let mut c = vec![0.0; space.num_dofs()];
            let start = rng.gen_range(0..m);
            let width = rng.gen_range(1..=3);
            for k in 0..width {
                let j = (start + k) % m;
                c[2 * j] = rng.gen_range(-1.0..1.0);
                c[2 * j + 1] = rng.gen_range(-1.0..1.0);
            }
            let z = SplineFunction::new(space, c).expect("length");
            let (a, b) = inverse_ratios(&z);
            if a.is_finite() {
                c1 = c1.max(a);
            }
            if b.is_finite() {
                c2 = c2.max(b);
            }
        }
        consts.push((c1, c2));
    }
    let spread = |f: fn(&(f64, f64)) -> f64| {
        let hi = consts.iter().map(f).fold(f64::MIN, f64::max);
        let lo = consts.iter().map(f).fold(f64::MAX, f64::min);
        hi / lo
    };
    let (s1, s2) = (spread(|c| c.0), spread(|c| c.1));
    let list = |f: fn(&(f64, f64)) -> f64| {
        consts
            .iter()
            .map(|c| format!("{:.3}", f(c)))
            .collect::<Vec<_>>()
            .join(", ")
    };
    vec![
        check(
            "inverse",
            "dx^1/2 |z_x|_inf / |z_x|",
            s1 < INVERSE_SPREAD,
            format!("constants [{}] over M = {meshes:?}, spread {s1:.3}", list(|c| c.0)),
        ),
        check(
            "inverse",
            "dx^3/2 |z_x|_inf / |z|",
            s2 < INVERSE_SPREAD,
            format!("constants [{}] over M = {meshes:?}, spread {s2:.3}", list(|c| c.1)),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        let results = run_all(1);
        for r in &results {
            assert!(r.passed, "{r}");
        }
        assert!(results.len() >= 10);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky_min_pivot(2, &[1.0, 2.0, 2.0, 1.0]).is_none());
        assert_eq!(cholesky_min_pivot(2, &[4.0, 0.0, 0.0, 9.0]), Some(4.0));
    }

    #[test]
    fn display_line() {
        let r = check("s", "n", false, "d".into());
        assert_eq!(r.to_string(), "FAIL  s/n: d");
    }
}
