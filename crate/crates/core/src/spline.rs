//! Periodic `C¹` piecewise-cubic Hermite splines on a uniform mesh.
//!
//! Node `j` sits at `x_left + j Δx`, `j = 0..M`, and carries two degrees of
//! freedom: a value DOF (index `2j`, basis `f((x - x_j)/Δx)`) and a slope
//! DOF (index `2j + 1`, basis `g((x - x_j)/Δx)`), where
//!
//! ```text
//! f(y) = 1 + y²(2|y| - 3),   g(y) = y (1 - |y|)²,   |y| ≤ 1
//! ```
//!
//! and both vanish for `|y| > 1`. The slope coefficient is therefore the
//! nodal derivative scaled by `Δx`.

use crate::assembly::assemble_mass;
use crate::error::{Error, Result};
use crate::linalg::PeriodicLu;
use crate::quadrature::{QuadratureRule, PROJECTION_ORDER};

/// Highest derivative order supported by point evaluation.
pub const MAX_DERIVATIVE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplineSpace {
    x_left: f64,
    x_right: f64,
    num_nodes: usize,
    dx: f64,
}

impl SplineSpace {
    /// Uniform periodic space with `num_nodes` nodes (equivalently cells)
    /// per period.
    pub fn periodic(x_left: f64, x_right: f64, num_nodes: usize) -> Result<Self> {
        if !(x_left.is_finite() && x_right.is_finite()) || x_right <= x_left {
            return Err(Error::InvalidSpace(format!(
                "interval [{x_left}, {x_right}] is empty"
            )));
        }
        if num_nodes < 4 {
            return Err(Error::InvalidSpace(format!(
                "need at least 4 nodes, got {num_nodes}"
            )));
        }
        Ok(Self {
            x_left,
            x_right,
            num_nodes,
            dx: (x_right - x_left) / num_nodes as f64,
        })
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn length(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_cells(&self) -> usize {
        self.num_nodes
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn num_dofs(&self) -> usize {
        2 * self.num_nodes
    }

    pub fn is_periodic(&self) -> bool {
        true
    }

    pub fn node(&self, j: usize) -> f64 {
        self.x_left + j as f64 * self.dx
    }

    /// Physical coordinate of local coordinate `s ∈ [0, 1]` in `cell`.
    pub fn cell_point(&self, cell: usize, s: f64) -> f64 {
        self.x_left + (cell as f64 + s) * self.dx
    }

    /// Global DOFs touching `cell`: left value, left slope, right value,
    /// right slope.
    pub fn cell_dofs(&self, cell: usize) -> [usize; 4] {
        let right = (cell + 1) % self.num_nodes;
        [2 * cell, 2 * cell + 1, 2 * right, 2 * right + 1]
    }

    /// Cell index and local coordinate of `x`, after periodic wrapping into
    /// `[x_left, x_right)`.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let m = self.num_nodes as f64;
        let t = ((x - self.x_left) / self.dx).rem_euclid(m);
        let cell = (t.floor() as usize).min(self.num_nodes - 1);
        (cell, (t - cell as f64).clamp(0.0, 1.0))
    }
}

/// Values of the four local shape functions and their first two
/// derivatives with respect to the local coordinate `s`.
///
/// Index `[d][k]`: derivative order `d`, local DOF `k` (see
/// [`SplineSpace::cell_dofs`]).
pub fn local_shape(s: f64) -> [[f64; 4]; 3] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        [1.0 - 3.0 * s2 + 2.0 * s3, s - 2.0 * s2 + s3, 3.0 * s2 - 2.0 * s3, s3 - s2],
        [
            -6.0 * s + 6.0 * s2,
            1.0 - 4.0 * s + 3.0 * s2,
            6.0 * s - 6.0 * s2,
            3.0 * s2 - 2.0 * s,
        ],
        [-6.0 + 12.0 * s, -4.0 + 6.0 * s, 6.0 - 12.0 * s, 6.0 * s - 2.0],
    ]
}

/// Reference value-basis `f` and its derivatives in `y`.
pub fn value_shape(y: f64, deriv: usize) -> f64 {
    let a = y.abs();
    if a > 1.0 {
        return 0.0;
    }
    match deriv {
        0 => 1.0 + y * y * (2.0 * a - 3.0),
        1 => 6.0 * y * a - 6.0 * y,
        2 => 12.0 * a - 6.0,
        _ => 0.0,
    }
}

/// Reference slope-basis `g` and its derivatives in `y`.
///
/// Second derivatives jump at `y = 0`; the right-hand branch is used there,
/// matching cell-based evaluation.
pub fn slope_shape(y: f64, deriv: usize) -> f64 {
    if y.abs() > 1.0 {
        return 0.0;
    }
    let sign = if y < 0.0 { -1.0 } else { 1.0 };
    match deriv {
        0 => y * (1.0 - y.abs()).powi(2),
        1 => 1.0 - 4.0 * sign * y + 3.0 * y * y,
        2 => -4.0 * sign + 6.0 * y,
        _ => 0.0,
    }
}

fn check_deriv(deriv: usize) -> Result<()> {
    if deriv > MAX_DERIVATIVE {
        Err(Error::UnsupportedDerivative {
            order: deriv,
            max: MAX_DERIVATIVE,
        })
    } else {
        Ok(())
    }
}

/// `v_dof^(deriv)(x)` with periodic wrap of the support.
pub fn basis_eval(space: &SplineSpace, dof: usize, x: f64, deriv: usize) -> Result<f64> {
    if dof >= space.num_dofs() {
        return Err(Error::DofIndex {
            index: dof,
            count: space.num_dofs(),
        });
    }
    check_deriv(deriv)?;
    let m = space.num_nodes() as f64;
    let node = dof / 2;
    let mut y = ((x - space.node(node)) / space.dx()).rem_euclid(m);
    if y >= m / 2.0 {
        y -= m;
    }
    let reference = if dof % 2 == 0 {
        value_shape(y, deriv)
    } else {
        slope_shape(y, deriv)
    };
    Ok(reference / space.dx().powi(deriv as i32))
}

/// A function in a [`SplineSpace`], stored as interleaved value/slope
/// coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineFunction {
    space: SplineSpace,
    coeffs: Vec<f64>,
}

impl SplineFunction {
    pub fn new(space: SplineSpace, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.num_dofs() {
            return Err(Error::CoefficientLength {
                got: coeffs.len(),
                expected: space.num_dofs(),
            });
        }
        Ok(Self { space, coeffs })
    }

    pub fn zeros(space: SplineSpace) -> Self {
        Self {
            space,
            coeffs: vec![0.0; space.num_dofs()],
        }
    }

    /// Constant function `c` (all value DOFs `c`, slopes zero).
    pub fn constant(space: SplineSpace, c: f64) -> Self {
        let coeffs = (0..space.num_dofs())
            .map(|i| if i % 2 == 0 { c } else { 0.0 })
            .collect();
        Self { space, coeffs }
    }

    /// Hermite interpolant from nodal values and derivatives.
    pub fn interpolate<F>(space: SplineSpace, mut value_and_slope: F) -> Self
    where
        F: FnMut(f64) -> (f64, f64),
    {
        let mut coeffs = Vec::with_capacity(space.num_dofs());
        for j in 0..space.num_nodes() {
            let (u, ux) = value_and_slope(space.node(j));
            coeffs.push(u);
            coeffs.push(ux * space.dx());
        }
        Self { space, coeffs }
    }

    pub fn space(&self) -> &SplineSpace {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Value and first two `x`-derivatives at local coordinate `s` of `cell`.
    pub fn local_values(&self, cell: usize, s: f64) -> [f64; 3] {
        let shape = local_shape(s);
        let dofs = self.space.cell_dofs(cell);
        let inv = 1.0 / self.space.dx();
        let mut out = [0.0; 3];
        for (d, row) in shape.iter().enumerate() {
            let v: f64 = dofs.iter().zip(row).map(|(&i, b)| self.coeffs[i] * b).sum();
            out[d] = v * inv.powi(d as i32);
        }
        out
    }

    pub fn eval(&self, x: f64, deriv: usize) -> Result<f64> {
        check_deriv(deriv)?;
        let (cell, s) = self.space.locate(x);
        Ok(self.local_values(cell, s)[deriv])
    }

    pub fn value(&self, x: f64) -> f64 {
        let (cell, s) = self.space.locate(x);
        self.local_values(cell, s)[0]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (cell, s) = self.space.locate(x);
        self.local_values(cell, s)[1]
    }
}

/// Maximum recursion depth of the adaptive projection quadrature.
pub const PROJECTION_MAX_DEPTH: usize = 12;
/// Sample magnitude that forces a bisection regardless of the error estimate.
pub const SINGULARITY_THRESHOLD: f64 = 1e6;

/// `L²` orthogonal projection of `u0` onto `space`.
///
/// The load vector `∫ u0 v_i` is integrated cell by cell with a 20-point
/// Gauss rule, bisecting wherever the halves disagree with the whole or a
/// sample exceeds [`SINGULARITY_THRESHOLD`], up to
/// [`PROJECTION_MAX_DEPTH`] levels. This handles integrable point
/// singularities and jumps in the data.
pub fn project_l2<F>(space: &SplineSpace, u0: F) -> Result<SplineFunction>
where
    F: Fn(f64) -> f64,
{
    let rule = QuadratureRule::gauss_legendre(PROJECTION_ORDER);
    let mut load = vec![0.0; space.num_dofs()];
    for cell in 0..space.num_cells() {
        let local = adaptive_cell_load(space, cell, &u0, &rule, 0.0, 1.0, 0);
        for (&i, v) in space.cell_dofs(cell).iter().zip(local) {
            load[i] += v;
        }
    }
    let mass = assemble_mass(space);
    let lu = PeriodicLu::new(&mass)?;
    let coeffs = lu.solve(&load);
    let residual: f64 = mass
        .matvec(&coeffs)
        .iter()
        .zip(&load)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = load.iter().map(|b| b * b).sum::<f64>().sqrt();
    debug_assert!(residual <= 1e-10 * (1.0 + scale), "projection residual {residual}");
    SplineFunction::new(*space, coeffs)
}

fn cell_load_on<F: Fn(f64) -> f64>(
    space: &SplineSpace,
    cell: usize,
    u0: &F,
    rule: &QuadratureRule,
    a: f64,
    b: f64,
) -> ([f64; 4], f64) {
    let mut out = [0.0; 4];
    let mut peak: f64 = 0.0;
    let h = b - a;
    for (q, w) in rule.iter() {
        let s = a + h * q;
        let u = u0(space.cell_point(cell, s));
        peak = peak.max(u.abs());
        let shape = local_shape(s);
        for k in 0..4 {
            out[k] += w * u * shape[0][k];
        }
    }
    let scale = h * space.dx();
    (out.map(|v| v * scale), peak)
}

fn adaptive_cell_load<F: Fn(f64) -> f64>(
    space: &SplineSpace,
    cell: usize,
    u0: &F,
    rule: &QuadratureRule,
    a: f64,
    b: f64,
    depth: usize,
) -> [f64; 4] {
    let (whole, peak) = cell_load_on(space, cell, u0, rule, a, b);
    if depth >= PROJECTION_MAX_DEPTH {
        return whole;
    }
    let mid = 0.5 * (a + b);
    let (left, peak_l) = cell_load_on(space, cell, u0, rule, a, mid);
    let (right, peak_r) = cell_load_on(space, cell, u0, rule, mid, b);
    let halves: [f64; 4] = std::array::from_fn(|k| left[k] + right[k]);
    let mag = halves.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let diff = whole
        .iter()
        .zip(&halves)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let singular = peak.max(peak_l).max(peak_r) > SINGULARITY_THRESHOLD;
    if !singular && diff <= 1e-13 * (mag + peak * (b - a) * space.dx()) {
        return halves;
    }
    let l = adaptive_cell_load(space, cell, u0, rule, a, mid, depth + 1);
    let r = adaptive_cell_load(space, cell, u0, rule, mid, b, depth + 1);
    std::array::from_fn(|k| l[k] + r[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space() -> SplineSpace {
        SplineSpace::periodic(-10.0, 10.0, 16).unwrap()
    }

    #[test]
    fn rejects_bad_spaces() {
        assert!(SplineSpace::periodic(0.0, 1.0, 3).is_err());
        assert!(SplineSpace::periodic(1.0, 1.0, 8).is_err());
        assert!(SplineSpace::periodic(0.0, f64::NAN, 8).is_err());
    }

    #[test]
    fn dof_count_and_width() {
        let s = space();
        assert_eq!(s.num_dofs(), 32);
        assert!((s.dx() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn value_basis_at_own_node() {
        let s = space();
        let j = 5;
        assert_eq!(basis_eval(&s, 2 * j, s.node(j), 0).unwrap(), 1.0);
        assert_eq!(basis_eval(&s, 2 * j, s.node(j + 1), 0).unwrap(), 0.0);
        assert_eq!(basis_eval(&s, 2 * j, s.node(j + 3), 0).unwrap(), 0.0);
    }

    #[test]
    fn slope_basis_derivative_at_node() {
        let s = space();
        let j = 3;
        assert_eq!(basis_eval(&s, 2 * j + 1, s.node(j), 0).unwrap(), 0.0);
        let d = basis_eval(&s, 2 * j + 1, s.node(j), 1).unwrap();
        assert!((d - 1.0 / s.dx()).abs() < 1e-15);
        // Continuous from the left as well.
        let eps = 1e-9;
        let d_left = basis_eval(&s, 2 * j + 1, s.node(j) - eps, 1).unwrap();
        assert!((d_left - 1.0 / s.dx()).abs() < 1e-7);
    }

    #[test]
    fn basis_support_wraps() {
        let s = space();
        // Node 0's value basis is nonzero just left of x_right.
        let x = s.x_right() - 0.5 * s.dx();
        assert!((basis_eval(&s, 0, x, 0).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn basis_errors() {
        let s = space();
        assert!(matches!(
            basis_eval(&s, 32, 0.0, 0),
            Err(Error::DofIndex { index: 32, count: 32 })
        ));
        assert!(matches!(
            basis_eval(&s, 0, 0.0, 3),
            Err(Error::UnsupportedDerivative { order: 3, .. })
        ));
    }

    #[test]
    fn zero_function_evaluates_to_zero() {
        let u = SplineFunction::zeros(space());
        for k in 0..50 {
            let x = -10.0 + 0.4 * k as f64;
            assert_eq!(u.value(x), 0.0);
            assert_eq!(u.eval(x, 2).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_value_dof_at_half_cell() {
        let s = space();
        let mut c = vec![0.0; s.num_dofs()];
        c[2 * 4] = 1.0;
        let u = SplineFunction::new(s, c).unwrap();
        let v = u.value(s.node(4) + 0.5 * s.dx());
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn local_and_pointwise_basis_agree() {
        let s = space();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = rng.gen_range(s.x_left()..s.x_right());
            let dof = rng.gen_range(0..s.num_dofs());
            let mut c = vec![0.0; s.num_dofs()];
            c[dof] = 1.0;
            let u = SplineFunction::new(s, c).unwrap();
            for d in 0..=2 {
                let a = u.eval(x, d).unwrap();
                let b = basis_eval(&s, dof, x, d).unwrap();
                assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "dof {dof} d {d}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn cubic_reproduction_at_midpoints() {
        // Hermite interpolation reproduces cubics exactly on each cell.
        let s = SplineSpace::periodic(0.0, 2.0, 8).unwrap();
        let p = |x: f64| 0.3 - 1.1 * x + 0.7 * x * x - 0.25 * x * x * x;
        let dp = |x: f64| -1.1 + 1.4 * x - 0.75 * x * x;
        let u = SplineFunction::interpolate(s, |x| (p(x), dp(x)));
        for cell in 0..s.num_cells() - 1 {
            let v = u.local_values(cell, 0.5)[0];
            let x = s.cell_point(cell, 0.5);
            assert!((v - p(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_coefficient_length() {
        assert!(matches!(
            SplineFunction::new(space(), vec![0.0; 5]),
            Err(Error::CoefficientLength { got: 5, expected: 32 })
        ));
    }

    #[test]
    fn project_zero() {
        let u = project_l2(&space(), |_| 0.0).unwrap();
        assert!(u.coeffs().iter().all(|&c| c == 0.0));
    }
}
