//! Assembly of the operators defining one implicit step.
//!
//! With trial coefficients `c` and test function `v_i`:
//!
//! ```text
//! A_ij = ∫ v_j φ v_i                 weighted mass
//! D_ij = ∫ (v_j)_x (φ v_i)_xx        dispersion
//! N_i(w) = ∫ w w_x φ v_i             convection
//! ```
//!
//! All integrals are cell-wise Gauss sums. The weight is evaluated as given
//! on `[x_left, x_right]` and is not wrapped across the periodic seam.

use crate::linalg::BandedPeriodicMatrix;
use crate::quadrature::{QuadratureRule, DEFAULT_ORDER};
use crate::spline::{local_shape, SplineFunction, SplineSpace};
use crate::weight::{WeightFunction, WeightKind};

/// Rule order used by [`identity_check`].
pub const IDENTITY_ORDER: usize = 20;
/// Minimum sub-cells per cell used by [`identity_check`].
pub const IDENTITY_SUBCELLS: usize = 2;
/// Sub-cells per mollifier width for smoothed-ramp weights.
const IDENTITY_SUBCELLS_PER_WIDTH: f64 = 16.0;

/// Sub-cells per cell so that the weight's features are resolved.
fn identity_subcells(space: &SplineSpace, weight: &WeightFunction) -> usize {
    match weight.kind() {
        WeightKind::Affine { .. } => IDENTITY_SUBCELLS,
        WeightKind::SmoothedRamp { width, .. } => {
            let n = (IDENTITY_SUBCELLS_PER_WIDTH * space.dx() / width).ceil() as usize;
            n.max(IDENTITY_SUBCELLS)
        }
    }
}

/// Per-quadrature-point tables reused by every assembly pass.
#[derive(Debug, Clone)]
struct CellTables {
    rule: QuadratureRule,
    shapes: Vec<[[f64; 4]; 3]>,
    /// `[φ, φ_x, φ_xx, φ_xxx]` at `(cell, point)`, row-major by cell.
    weight: Vec<[f64; 4]>,
}

impl CellTables {
    fn new(space: &SplineSpace, weight: Option<&WeightFunction>, order: usize) -> Self {
        let rule = QuadratureRule::gauss_legendre(order);
        let shapes = rule.points().iter().map(|&s| local_shape(s)).collect();
        let weight = (0..space.num_cells())
            .flat_map(|cell| {
                rule.points()
                    .iter()
                    .map(move |&s| space.cell_point(cell, s))
                    .collect::<Vec<_>>()
            })
            .map(|x| weight.map_or([1.0, 0.0, 0.0, 0.0], |w| w.derivatives(x)))
            .collect();
        Self {
            rule,
            shapes,
            weight,
        }
    }

    fn order(&self) -> usize {
        self.rule.order()
    }
}

fn assemble_local<F>(space: &SplineSpace, tables: &CellTables, mut local: F) -> BandedPeriodicMatrix
where
    F: FnMut(&[[f64; 4]; 3], &[f64; 4], usize, usize) -> f64,
{
    let mut m = BandedPeriodicMatrix::zeros(space.num_dofs());
    let nq = tables.order();
    let dx = space.dx();
    for cell in 0..space.num_cells() {
        let dofs = space.cell_dofs(cell);
        let mut block = [[0.0; 4]; 4];
        for (q, w) in tables.rule.weights().iter().enumerate() {
            let shape = &tables.shapes[q];
            let phi = &tables.weight[cell * nq + q];
            for (a, row) in block.iter_mut().enumerate() {
                for (b, entry) in row.iter_mut().enumerate() {
                    *entry += w * local(shape, phi, a, b);
                }
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                m.add(dofs[a], dofs[b], dx * block[a][b]);
            }
        }
    }
    m
}

/// Unweighted mass matrix `∫ v_j v_i`.
pub fn assemble_mass(space: &SplineSpace) -> BandedPeriodicMatrix {
    let tables = CellTables::new(space, None, DEFAULT_ORDER);
    assemble_local(space, &tables, |shape, _, i, j| shape[0][i] * shape[0][j])
}

/// Weighted mass matrix `A_ij = ∫ v_j φ v_i`.
pub fn assemble_weighted_mass(space: &SplineSpace, weight: &WeightFunction) -> BandedPeriodicMatrix {
    let tables = CellTables::new(space, Some(weight), DEFAULT_ORDER);
    weighted_mass_from(space, &tables)
}

fn weighted_mass_from(space: &SplineSpace, tables: &CellTables) -> BandedPeriodicMatrix {
    assemble_local(space, tables, |shape, phi, i, j| {
        phi[0] * shape[0][i] * shape[0][j]
    })
}

/// Dispersion matrix `D_ij = ∫ (v_j)_x (φ v_i)_xx`.
pub fn assemble_dispersion(space: &SplineSpace, weight: &WeightFunction) -> BandedPeriodicMatrix {
    let tables = CellTables::new(space, Some(weight), DEFAULT_ORDER);
    dispersion_from(space, &tables)
}

fn dispersion_from(space: &SplineSpace, tables: &CellTables) -> BandedPeriodicMatrix {
    let inv = 1.0 / space.dx();
    let inv2 = inv * inv;
    assemble_local(space, tables, |shape, phi, i, j| {
        // (φ v)_xx = φ_xx v + 2 φ_x v_x + φ v_xx
        let test = phi[2] * shape[0][i]
            + 2.0 * phi[1] * shape[1][i] * inv
            + phi[0] * shape[2][i] * inv2;
        shape[1][j] * inv * test
    })
}

/// Operators of the implicit scheme on one space and weight.
#[derive(Debug, Clone)]
pub struct SchemeOperators {
    space: SplineSpace,
    weight: WeightFunction,
    tables: CellTables,
    mass: BandedPeriodicMatrix,
    weighted_mass: BandedPeriodicMatrix,
    dispersion: BandedPeriodicMatrix,
}

impl SchemeOperators {
    pub fn assemble(space: &SplineSpace, weight: &WeightFunction) -> Self {
        let tables = CellTables::new(space, Some(weight), DEFAULT_ORDER);
        Self {
            space: *space,
            weight: weight.clone(),
            mass: assemble_mass(space),
            weighted_mass: weighted_mass_from(space, &tables),
            dispersion: dispersion_from(space, &tables),
            tables,
        }
    }

    pub fn space(&self) -> &SplineSpace {
        &self.space
    }

    pub fn weight(&self) -> &WeightFunction {
        &self.weight
    }

    /// Unweighted mass matrix, used for `L²` norms.
    pub fn mass(&self) -> &BandedPeriodicMatrix {
        &self.mass
    }

    /// `A`.
    pub fn weighted_mass(&self) -> &BandedPeriodicMatrix {
        &self.weighted_mass
    }

    /// `D`.
    pub fn dispersion(&self) -> &BandedPeriodicMatrix {
        &self.dispersion
    }

    pub fn quadrature_order(&self) -> usize {
        self.tables.order()
    }

    /// `‖c‖_{L²}` for a coefficient vector.
    pub fn l2_norm(&self, coeffs: &[f64]) -> f64 {
        self.mass.bilinear(coeffs, coeffs).max(0.0).sqrt()
    }

    /// `‖c‖_{2,φ}` for a coefficient vector.
    pub fn weighted_norm(&self, coeffs: &[f64]) -> f64 {
        self.weighted_mass.bilinear(coeffs, coeffs).max(0.0).sqrt()
    }

    /// `N_i(w) = ∫ w w_x φ v_i`.
    pub fn nonlinear(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.space.num_dofs());
        let mut out = vec![0.0; w.len()];
        let nq = self.tables.order();
        let dx = self.space.dx();
        let inv = 1.0 / dx;
        for cell in 0..self.space.num_cells() {
            let dofs = self.space.cell_dofs(cell);
            let c = dofs.map(|i| w[i]);
            let mut local = [0.0; 4];
            for (q, wq) in self.tables.rule.weights().iter().enumerate() {
                let shape = &self.tables.shapes[q];
                let u: f64 = (0..4).map(|k| c[k] * shape[0][k]).sum();
                let ux: f64 = (0..4).map(|k| c[k] * shape[1][k]).sum::<f64>() * inv;
                let g = wq * u * ux * self.tables.weight[cell * nq + q][0];
                for k in 0..4 {
                    local[k] += g * shape[0][k];
                }
            }
            for k in 0..4 {
                out[dofs[k]] += dx * local[k];
            }
        }
        out
    }
}

/// `N(w)` for a spline function; see [`SchemeOperators::nonlinear`].
pub fn assemble_nonlinear(ops: &SchemeOperators, w: &SplineFunction) -> Vec<f64> {
    ops.nonlinear(w.coeffs())
}

/// Both sides of
///
/// ```text
/// ∫ w_x (φ w)_xx = 3/2 ∫ w_x² φ_x − 1/2 ∫ w² φ_xxx
/// ```
///
/// each by its own pointwise quadrature. Over a periodic interval the two
/// sides differ by the seam term `[φ w_x²/2 + φ_xx w²/2]`, which vanishes
/// when `φ` is periodic or when `w_x` vanishes at the seam and `φ_xx` does
/// too.
pub fn identity_check(space: &SplineSpace, weight: &WeightFunction, w: &SplineFunction) -> (f64, f64) {
    let rule = QuadratureRule::gauss_legendre(IDENTITY_ORDER);
    let subcells = identity_subcells(space, weight);
    let sub = subcells as f64;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for cell in 0..space.num_cells() {
        for part in 0..subcells {
            for (q, wq) in rule.iter() {
                let s = (part as f64 + q) / sub;
                let x = space.cell_point(cell, s);
                let [u, ux, uxx] = w.local_values(cell, s);
                let [p, px, pxx, pxxx] = weight.derivatives(x);
                let scale = wq * space.dx() / sub;
                lhs += scale * ux * (pxx * u + 2.0 * px * ux + p * uxx);
                rhs += scale * (1.5 * ux * ux * px - 0.5 * u * u * pxxx);
            }
        }
    }
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coeffs(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn unit_weight_mass_matches_unweighted() {
        let space = SplineSpace::periodic(-3.0, 5.0, 12).unwrap();
        let w = WeightFunction::unit(-3.0, 5.0).unwrap();
        let a = assemble_weighted_mass(&space, &w);
        let m = assemble_mass(&space);
        let (da, dm) = (a.to_dense(), m.to_dense());
        for (x, y) in da.iter().zip(&dm) {
            assert!((x - y).abs() < 1e-13);
        }
        assert!((a.get(4, 4) - 26.0 / 35.0 * space.dx()).abs() < 1e-13);
        assert!(a.max_asymmetry() < 1e-13);
    }

    #[test]
    fn affine_mass_integrates_weight() {
        let space = SplineSpace::periodic(-10.0, 10.0, 16).unwrap();
        let w = WeightFunction::experiment_default(-10.0, 10.0).unwrap();
        let a = assemble_weighted_mass(&space, &w);
        let one = SplineFunction::constant(space, 1.0);
        let v = a.bilinear(one.coeffs(), one.coeffs());
        assert!((v - 1000.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn dispersion_form_vanishes_for_unit_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let space = SplineSpace::periodic(0.0, 4.0, 16).unwrap();
        let w = WeightFunction::unit(0.0, 4.0).unwrap();
        let d = assemble_dispersion(&space, &w);
        for _ in 0..20 {
            let c = random_coeffs(space.num_dofs(), &mut rng);
            let q = d.bilinear(&c, &c);
            assert!(q.abs() <= 1e-10 * dot(&c, &c), "{q}");
        }
        let z = vec![0.0; space.num_dofs()];
        assert!(d.matvec(&z).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nonlinear_zero_and_constant() {
        let space = SplineSpace::periodic(-10.0, 10.0, 16).unwrap();
        let w = WeightFunction::experiment_default(-10.0, 10.0).unwrap();
        let ops = SchemeOperators::assemble(&space, &w);
        let zero = SplineFunction::zeros(space);
        assert!(assemble_nonlinear(&ops, &zero).iter().all(|&v| v == 0.0));
        let c = SplineFunction::constant(space, 2.5);
        assert!(assemble_nonlinear(&ops, &c).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn nonlinear_is_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let space = SplineSpace::periodic(-10.0, 10.0, 16).unwrap();
        let w = WeightFunction::experiment_default(-10.0, 10.0).unwrap();
        let ops = SchemeOperators::assemble(&space, &w);
        for _ in 0..10 {
            let c = random_coeffs(space.num_dofs(), &mut rng);
            let alpha: f64 = rng.gen_range(-3.0..3.0);
            let scaled: Vec<f64> = c.iter().map(|v| alpha * v).collect();
            let n1 = ops.nonlinear(&c);
            let n2 = ops.nonlinear(&scaled);
            for (a, b) in n1.iter().zip(&n2) {
                assert!((alpha * alpha * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn identity_zero_function() {
        let space = SplineSpace::periodic(-10.0, 10.0, 16).unwrap();
        let w = WeightFunction::smoothed_ramp(4.0, 1.0, -10.0, 10.0).unwrap();
        assert_eq!(identity_check(&space, &w, &SplineFunction::zeros(space)), (0.0, 0.0));
    }
}
