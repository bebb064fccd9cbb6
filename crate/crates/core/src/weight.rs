//! The weight `φ` multiplying every test function, and the constant `C_R`
//! bounding it and its first three derivatives on the computational domain.
//!
//! Two shapes are supported. The affine weight `a + b x` is what the
//! experiments use. The smoothed ramp is the clamped ramp
//! `max(1, min(1 + x + R, 1 + 2R))` convolved with a normalized
//! `exp(-1/(1 - y²))` bump of half-width `h`; it is constant outside
//! `[-R - h, R + h]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;

/// Highest derivative of `φ` that can be evaluated.
pub const MAX_WEIGHT_DERIVATIVE: usize = 3;
/// Gauss points per panel for the convolution integrals.
pub const CONVOLUTION_ORDER: usize = 40;
const CONVOLUTION_PANELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    Affine { a: f64, b: f64 },
    SmoothedRamp { radius: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    kind: WeightKind,
    x_left: f64,
    x_right: f64,
    #[serde(skip)]
    mollifier: Option<Mollifier>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightConstant {
    pub c_r: f64,
}

impl WeightFunction {
    pub fn affine(a: f64, b: f64, x_left: f64, x_right: f64) -> Result<Self> {
        check_domain(x_left, x_right)?;
        if b < 0.0 {
            return Err(Error::Parameter(format!(
                "affine weight slope {b} is negative"
            )));
        }
        let lowest = a + b * x_left;
        if lowest < 1.0 {
            return Err(Error::Parameter(format!(
                "affine weight {a} + {b}x drops to {lowest} < 1 on [{x_left}, {x_right}]"
            )));
        }
        Ok(Self {
            kind: WeightKind::Affine { a, b },
            x_left,
            x_right,
            mollifier: None,
        })
    }

    /// `φ ≡ 1`.
    pub fn unit(x_left: f64, x_right: f64) -> Result<Self> {
        Self::affine(1.0, 0.0, x_left, x_right)
    }

    /// `φ(x) = 50 + x`, the weight used in all experiments.
    pub fn experiment_default(x_left: f64, x_right: f64) -> Result<Self> {
        Self::affine(50.0, 1.0, x_left, x_right)
    }

    pub fn smoothed_ramp(radius: f64, width: f64, x_left: f64, x_right: f64) -> Result<Self> {
        check_domain(x_left, x_right)?;
        if !(radius > 0.0 && width > 0.0) {
            return Err(Error::Parameter(format!(
                "smoothed ramp needs positive radius and width, got R={radius}, h={width}"
            )));
        }
        Ok(Self {
            kind: WeightKind::SmoothedRamp { radius, width },
            x_left,
            x_right,
            mollifier: Some(Mollifier::new(width)),
        })
    }

    /// Rebuilds derived state after deserialization.
    pub fn from_kind(kind: WeightKind, x_left: f64, x_right: f64) -> Result<Self> {
        match kind {
            WeightKind::Affine { a, b } => Self::affine(a, b, x_left, x_right),
            WeightKind::SmoothedRamp { radius, width } => {
                Self::smoothed_ramp(radius, width, x_left, x_right)
            }
        }
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x_left, self.x_right)
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.kind, WeightKind::Affine { .. })
    }

    pub fn eval(&self, x: f64, deriv: usize) -> Result<f64> {
        if deriv > MAX_WEIGHT_DERIVATIVE {
            return Err(Error::UnsupportedDerivative {
                order: deriv,
                max: MAX_WEIGHT_DERIVATIVE,
            });
        }
        Ok(self.derivatives(x)[deriv])
    }

    /// `[φ, φ_x, φ_xx, φ_xxx]` at `x`.
    pub fn derivatives(&self, x: f64) -> [f64; 4] {
        match (self.kind, &self.mollifier) {
            (WeightKind::Affine { a, b }, _) => [a + b * x, b, 0.0, 0.0],
            (WeightKind::SmoothedRamp { radius, .. }, Some(m)) => m.ramp_derivatives(radius, x),
            (WeightKind::SmoothedRamp { radius, width }, None) => {
                Mollifier::new(width).ramp_derivatives(radius, x)
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivatives(x)[0]
    }

    /// `C_R = max(‖φ‖∞, ‖φ_x‖∞, ‖φ_xx‖∞, ‖φ_xxx‖∞)` over the domain.
    ///
    /// Exact for the affine weight; otherwise sampled on a uniform grid of
    /// `10 * cells` intervals plus the endpoints.
    pub fn compute_cr(&self, cells: usize) -> WeightConstant {
        let c_r = match self.kind {
            WeightKind::Affine { a, b } => (a + b * self.x_left)
                .abs()
                .max((a + b * self.x_right).abs())
                .max(b.abs()),
            WeightKind::SmoothedRamp { .. } => {
                let n = 10 * cells.max(1);
                let h = (self.x_right - self.x_left) / n as f64;
                (0..=n)
                    .map(|k| {
                        let x = if k == n {
                            self.x_right
                        } else {
                            self.x_left + k as f64 * h
                        };
                        self.derivatives(x).iter().fold(0.0_f64, |m, d| m.max(d.abs()))
                    })
                    .fold(0.0, f64::max)
            }
        };
        WeightConstant { c_r }
    }
}

fn check_domain(x_left: f64, x_right: f64) -> Result<()> {
    if x_left.is_finite() && x_right.is_finite() && x_left < x_right {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "weight domain [{x_left}, {x_right}] is empty"
        )))
    }
}

/// Unit-mass bump `exp(-1/(1 - (y/h)²)) / (Z h)` supported on `[-h, h]`.
#[derive(Debug, Clone, PartialEq)]
struct Mollifier {
    width: f64,
    norm: f64,
    rule: QuadratureRule,
}

impl Mollifier {
    fn new(width: f64) -> Self {
        let rule = QuadratureRule::gauss_legendre(CONVOLUTION_ORDER);
        let mut m = Self {
            width,
            norm: 1.0,
            rule,
        };
        m.norm = m.integrate(-width, width, |y| m.bump(y));
        m
    }

    fn bump(&self, y: f64) -> f64 {
        let t = y / self.width;
        if t.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - t * t)).exp() / self.width
        }
    }

    fn density(&self, y: f64) -> f64 {
        self.bump(y) / self.norm
    }

    fn density_derivative(&self, y: f64) -> f64 {
        let t = y / self.width;
        if t.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - t * t;
        self.density(y) * (-2.0 * t / (q * q)) / self.width
    }

    /// Composite Gauss over `[a, b]`, panelled so kinks in the integrand
    /// never fall inside a panel when they are passed as endpoints.
    fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        if b <= a {
            return 0.0;
        }
        let h = (b - a) / CONVOLUTION_PANELS as f64;
        (0..CONVOLUTION_PANELS)
            .map(|k| {
                let lo = a + k as f64 * h;
                self.rule.integrate(lo, lo + h, &f)
            })
            .sum()
    }

    fn ramp_derivatives(&self, radius: f64, x: f64) -> [f64; 4] {
        let h = self.width;
        if x <= -radius - h {
            return [1.0, 0.0, 0.0, 0.0];
        }
        if x >= radius + h {
            return [1.0 + 2.0 * radius, 0.0, 0.0, 0.0];
        }
        let ramp = |z: f64| (1.0 + z + radius).clamp(1.0, 1.0 + 2.0 * radius);
        // Kinks of ramp(x - y) sit at y = x ± R.
        let mut breaks = vec![-h, h];
        for k in [x - radius, x + radius] {
            if k > -h && k < h {
                breaks.push(k);
            }
        }
        breaks.sort_by(f64::total_cmp);
        let value: f64 = breaks
            .windows(2)
            .map(|w| self.integrate(w[0], w[1], |y| ramp(x - y) * self.density(y)))
            .sum();
        let slope = self.integrate((x - radius).max(-h), (x + radius).min(h), |y| {
            self.density(y)
        });
        let second = self.density(x + radius) - self.density(x - radius);
        let third = self.density_derivative(x + radius) - self.density_derivative(x - radius);
        [value, slope, second, third]
    }
}
