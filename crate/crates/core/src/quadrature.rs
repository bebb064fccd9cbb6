//! Gauss–Legendre rules on the reference cell `[0, 1]` and the per-cell
//! integration loop used by every inner product in the scheme.

use crate::spline::SplineSpace;

/// Rule order used for all bilinear forms and the nonlinear term.
///
/// Exact for degree 11, which covers `w w_x φ v_i` (degree 9) with an
/// affine weight.
pub const DEFAULT_ORDER: usize = 6;

/// Rule order for error norms against non-polynomial exact solutions.
pub const ERROR_NORM_ORDER: usize = 10;

/// Rule order for projecting possibly singular initial data.
pub const PROJECTION_ORDER: usize = 20;

/// A Gauss–Legendre rule mapped to the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds the `order`-point rule and checks it against the monomials
    /// `s^k`, `k < 2 * order`.
    ///
    /// Panics if `order == 0` or the exactness check fails, both of which
    /// indicate a programming error rather than a runtime condition.
    pub fn gauss_legendre(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be at least 1");
        let (nodes, weights) = legendre_nodes(order);
        let rule = Self {
            points: nodes.iter().map(|&x| 0.5 * (x + 1.0)).collect(),
            weights: weights.iter().map(|&w| 0.5 * w).collect(),
        };
        for k in 0..2 * order {
            let approx: f64 = rule.iter().map(|(s, w)| w * s.powi(k as i32)).sum();
            let exact = 1.0 / (k as f64 + 1.0);
            assert!(
                (approx - exact).abs() <= 1e-13,
                "Gauss-Legendre order {order} fails monomial s^{k}: {approx} vs {exact}"
            );
        }
        rule
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(abscissa, weight)` pairs on `[0, 1]`.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = b - a;
        h * self.iter().map(|(s, w)| w * f(a + h * s)).sum::<f64>()
    }
}

/// Nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `Σ_cells Δx Σ_q w_q g(cell, s_q)` over every cell of `space`.
///
/// The reduction runs in cell order, so results are bit-reproducible.
pub fn integrate_cells<F>(space: &SplineSpace, rule: &QuadratureRule, mut integrand: F) -> f64
where
    F: FnMut(usize, f64) -> f64,
{
    let dx = space.dx();
    let mut total = 0.0;
    for cell in 0..space.num_cells() {
        let local: f64 = rule.iter().map(|(s, w)| w * integrand(cell, s)).sum();
        total += dx * local;
    }
    total
}
