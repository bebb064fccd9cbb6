use kdv_galerkin::assembly::{
    assemble_dispersion, assemble_mass, assemble_nonlinear, assemble_weighted_mass,
    identity_check, SchemeOperators,
};
use kdv_galerkin::diagnostics::{l2_norm, weighted_norm};
use kdv_galerkin::linalg::{dot, BandedPeriodicMatrix};
use kdv_galerkin::quadrature::{integrate_cells, QuadratureRule};
use kdv_galerkin::spline::{SplineFunction, SplineSpace};
use kdv_galerkin::weight::WeightFunction;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn dense(m: &BandedPeriodicMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), &m.to_dense())
}

#[test]
fn weighted_mass_is_spd() {
    for m in [8, 16, 32] {
        let space = SplineSpace::periodic(-10.0, 10.0, m).unwrap();
        for weight in [
            WeightFunction::experiment_default(-10.0, 10.0).unwrap(),
            WeightFunction::smoothed_ramp(4.0, 1.0, -10.0, 10.0).unwrap(),
        ] {
            let a = dense(&assemble_weighted_mass(&space, &weight));
            assert!((&a - a.transpose()).amax() <= 1e-13 * a.amax());
            let eig = a.symmetric_eigen();
            let min = eig.eigenvalues.min();
            assert!(min > 0.0, "M = {m}: smallest eigenvalue {min}");
        }
    }
}

#[test]
fn banded_matvec_matches_dense() {
    for m in [4, 7, 16, 32] {
        let space = SplineSpace::periodic(0.0, 3.0, m).unwrap();
        let weight = WeightFunction::affine(2.0, 0.5, 0.0, 3.0).unwrap();
        for op in [assemble_weighted_mass(&space, &weight), assemble_dispersion(&space, &weight)] {
            let x: Vec<f64> = (0..op.dim()).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
            let banded = op.matvec(&x);
            let d = dense(&op) * nalgebra::DVector::from_vec(x.clone());
            for (a, b) in banded.iter().zip(d.iter()) {
                assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()));
            }
        }
    }
}

#[test]
fn unit_weight_mass_diagonal() {
    let space = SplineSpace::periodic(0.0, 2.0, 10).unwrap();
    let m = assemble_mass(&space);
    assert!((m.get(4, 4) - 26.0 / 35.0 * space.dx()).abs() < 1e-14);
}

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_with_smoothed_ramp(mut c in coeffs(40), radius in 1.5..5.0f64, width in 0.5..2.0f64) {
        let space = SplineSpace::periodic(-10.0, 10.0, 20).unwrap();
        let weight = WeightFunction::smoothed_ramp(radius, width, -10.0, 10.0).unwrap();
        c[1] = 0.0;
        let w = SplineFunction::new(space, c).unwrap();
        let (lhs, rhs) = identity_check(&space, &weight, &w);
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()).max(1e-300));
    }

    #[test]
    fn unit_weight_identity_vanishes(c in coeffs(32)) {
        let space = SplineSpace::periodic(0.0, 5.0, 16).unwrap();
        let weight = WeightFunction::unit(0.0, 5.0).unwrap();
        let w = SplineFunction::new(space, c.clone()).unwrap();
        let (lhs, rhs) = identity_check(&space, &weight, &w);
        prop_assert!(lhs.abs() <= 1e-10 && rhs == 0.0);
        let d = assemble_dispersion(&space, &weight);
        prop_assert!(d.bilinear(&c, &c).abs() <= 1e-10 * dot(&c, &c));
    }

    #[test]
    fn affine_dispersion_form_away_from_seam(c in coeffs(48)) {
        let space = SplineSpace::periodic(-10.0, 10.0, 24).unwrap();
        let weight = WeightFunction::experiment_default(-10.0, 10.0).unwrap();
        let mut c = c;
        for j in [0, 1, 2, 22, 23] {
            c[2 * j] = 0.0;
            c[2 * j + 1] = 0.0;
        }
        let u = SplineFunction::new(space, c.clone()).unwrap();
        let rule = QuadratureRule::gauss_legendre(10);
        let exact = 1.5 * integrate_cells(&space, &rule, |cell, s| u.local_values(cell, s)[1].powi(2));
        let form = assemble_dispersion(&space, &weight).bilinear(&c, &c);
        prop_assert!(form >= 0.0);
        prop_assert!((form - exact).abs() <= 1e-10 * exact.max(1e-300));
    }

    #[test]
    fn convection_energy_vanishes_for_unit_weight(c in coeffs(32)) {
        let space = SplineSpace::periodic(0.0, 4.0, 16).unwrap();
        let ops = SchemeOperators::assemble(&space, &WeightFunction::unit(0.0, 4.0).unwrap());
        let n = ops.nonlinear(&c);
        let scale = c.iter().map(|x| x.abs()).fold(0.0, f64::max).powi(3);
        prop_assert!(dot(&c, &n).abs() <= 1e-10 * (1.0 + scale));
    }

    #[test]
    fn convection_is_quadratic(c in coeffs(32), alpha in -3.0..3.0f64) {
        let space = SplineSpace::periodic(-10.0, 10.0, 16).unwrap();
        let ops = SchemeOperators::assemble(&space, &WeightFunction::experiment_default(-10.0, 10.0).unwrap());
        let w = SplineFunction::new(space, c.clone()).unwrap();
        let scaled = SplineFunction::new(space, c.iter().map(|x| alpha * x).collect()).unwrap();
        let n1 = assemble_nonlinear(&ops, &w);
        let n2 = assemble_nonlinear(&ops, &scaled);
        let scale = n1.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for (a, b) in n1.iter().zip(&n2) {
            prop_assert!((alpha * alpha * a - b).abs() <= 1e-12 * (1.0 + alpha * alpha * scale));
        }
    }

    #[test]
    fn weighted_norm_dominates_l2(c in coeffs(40)) {
        let space = SplineSpace::periodic(-10.0, 10.0, 20).unwrap();
        let u = SplineFunction::new(space, c).unwrap();
        for weight in [
            WeightFunction::experiment_default(-10.0, 10.0).unwrap(),
            WeightFunction::smoothed_ramp(3.0, 1.0, -10.0, 10.0).unwrap(),
        ] {
            prop_assert!(weighted_norm(&u, &weight) >= l2_norm(&u) * (1.0 - 1e-12));
        }
    }
}
