//! Hybrid M-estimator losses and their shrinkage operators.
//!
//! Every loss in this module has the same shape: it is the ordinary
//! quadratic `x²/2` on `|x| ≤ c` and a scaled robust function `a·g(|x|) + b`
//! outside, with `a` and `b` chosen so that the two pieces join with a
//! continuous first derivative at the knot `|x| = c`:
//!
//! ```text
//! a = c / g'(c),    b = c²/2 − a·g(c)
//! ```
//!
//! | kind  | g(t)                | a·g'(t) for t > c         |
//! |-------|---------------------|---------------------------|
//! | HOW   | σ²/2·(1−e^{−t²/σ²}) | t·e^{(c²−t²)/σ²}          |
//! | HOC   | ln(1 + t²/γ²)       | (γ² + c²)·t / (γ² + t²)   |
//! | HOP   | t^p                 | c^{2−p}·t^{p−1}           |
//! | Huber | t                   | c                         |
//!
//! Inside the knot the weight `l'(x)/x` is exactly one, so residuals that
//! look like ordinary noise are never down-weighted.
//!
//! The shrinkage operator is the minimizer of `(y − x)²/2 + φ(y)` where `φ`
//! is the implicit regularizer dual to the loss. It has the closed form
//!
//! ```text
//! shrink(x) = sign(x) · max{0, |x| − a·g'(|x|)}
//! ```
//!
//! and satisfies `shrink(x) = x − l'(x)` everywhere. `φ` itself has no
//! closed form; [`HybridLoss::dual_at_image`] evaluates it on the image of
//! the shrinkage map.
//!
//! All outer-branch quantities are computed from the simplified `a·g'(t)`
//! products above, never from `a` and `g'` separately: for HOW with a small
//! σ the coefficient `a = e^{c²/σ²}` overflows long before the product does.
//! HOP with `p < 1` has `g'(t) → ∞` as `t → 0⁺`, but the outer branch only
//! ever sees `t > c > 0`.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::EstimatorError;

/// A scale parameter that is either a fixed constant or follows the
/// current threshold `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Re-derived as `c` every time the threshold changes.
    Threshold,
    Fixed(f64),
}

impl Scale {
    fn resolve(self, c: f64) -> f64 {
        match self {
            Scale::Threshold => c,
            Scale::Fixed(v) => v,
        }
    }
}

/// Which hybrid loss to use, with its shape parameter.
///
/// The threshold `c` is deliberately not part of the spec: the solver
/// changes it every iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// Hybrid ordinary-Welsch.
    How {
        sigma: Scale,
    },
    /// Hybrid ordinary-Cauchy.
    Hoc {
        gamma: Scale,
    },
    /// Hybrid ordinary-ℓp, `0 < p ≤ 1`.
    Hop {
        p: f64,
    },
    Huber,
}

impl LossSpec {
    pub fn how() -> Self {
        LossSpec::How { sigma: Scale::Threshold }
    }

    pub fn hoc() -> Self {
        LossSpec::Hoc { gamma: Scale::Threshold }
    }

    pub fn hop(p: f64) -> Self {
        LossSpec::Hop { p }
    }

    /// Short lowercase name (`how`, `hoc`, `hop`, `huber`).
    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::How { .. } => "how",
            LossSpec::Hoc { .. } => "hoc",
            LossSpec::Hop { .. } => "hop",
            LossSpec::Huber => "huber",
        }
    }

    /// Checks the shape parameter domain.
    pub fn validate(&self) -> Result<(), EstimatorError> {
        match *self {
            LossSpec::How { sigma: Scale::Fixed(s) } => check_scale("sigma", s),
            LossSpec::Hoc { gamma: Scale::Fixed(g) } => check_scale("gamma", g),
            LossSpec::Hop { p } => {
                if p.is_finite() && p > 0.0 && p <= 1.0 {
                    Ok(())
                } else {
                    Err(EstimatorError::Exponent(p))
                }
            }
            _ => Ok(()),
        }
    }

    /// True if a scale parameter is tied to the threshold.
    pub fn follows_threshold(&self) -> bool {
        matches!(self, LossSpec::How { sigma: Scale::Threshold } | LossSpec::Hoc { gamma: Scale::Threshold })
    }

    /// Binds the loss to a threshold, resolving any tied scale.
    pub fn at(&self, c: f64) -> Result<HybridLoss, EstimatorError> {
        self.validate()?;
        if !(c.is_finite() && c > 0.0) {
            return Err(EstimatorError::Threshold(c));
        }
        let shape = match *self {
            LossSpec::How { sigma } => {
                let s = sigma.resolve(c);
                Shape::Welsch { sigma_sq: s * s }
            }
            LossSpec::Hoc { gamma } => {
                let g = gamma.resolve(c);
                Shape::Cauchy { gamma_sq: g * g }
            }
            LossSpec::Hop { p } if p == 1.0 => Shape::Abs,
            LossSpec::Hop { p } => Shape::Power { p },
            LossSpec::Huber => Shape::Abs,
        };
        Ok(HybridLoss { shape, c })
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::How { sigma: Scale::Fixed(s) } => write!(f, "how(sigma={s})"),
            LossSpec::Hoc { gamma: Scale::Fixed(g) } => write!(f, "hoc(gamma={g})"),
            LossSpec::Hop { p } => write!(f, "hop(p={p})"),
            other => f.write_str(other.name()),
        }
    }
}

fn check_scale(name: &'static str, v: f64) -> Result<(), EstimatorError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(EstimatorError::Scale { name, value: v })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Welsch { sigma_sq: f64 },
    Cauchy { gamma_sq: f64 },
    Power { p: f64 },
    Abs,
}

/// Continuity constants `a`, `b` of the outer branch `a·g(|x|) + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub a: f64,
    pub b: f64,
}

/// A validated loss bound to a threshold `c > 0`.
///
/// All scalar evaluations are infallible once constructed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridLoss {
    shape: Shape,
    c: f64,
}

impl HybridLoss {
    pub fn threshold(&self) -> f64 {
        self.c
    }

    /// `a = c/g'(c)` and `b = c²/2 − a·g(c)`, computed literally.
    ///
    /// Only meant for inspecting the construction; for HOW with `σ ≪ c`
    /// the value of `a` overflows.
    pub fn coefficients(&self) -> LossCoefficients {
        let c = self.c;
        let (g_c, dg_c) = match self.shape {
            Shape::Welsch { sigma_sq } => {
                let e = (-c * c / sigma_sq).exp();
                (-0.5 * sigma_sq * (-c * c / sigma_sq).exp_m1(), c * e)
            }
            Shape::Cauchy { gamma_sq } => ((1.0 + c * c / gamma_sq).ln(), 2.0 * c / (gamma_sq + c * c)),
            Shape::Power { p } => (c.powf(p), p * c.powf(p - 1.0)),
            Shape::Abs => (c, 1.0),
        };
        let a = c / dg_c;
        LossCoefficients { a, b: 0.5 * c * c - a * g_c }
    }

    /// `a·g'(t)` for `t > c`: the magnitude of `l'` on the outer branch.
    #[inline]
    fn outer_slope(&self, t: f64) -> f64 {
        let c = self.c;
        match self.shape {
            // (c - t)(c + t) stays nonzero for t != c, unlike c² - t².
            Shape::Welsch { sigma_sq } => t * ((c - t) * (c + t) / sigma_sq).exp(),
            Shape::Cauchy { gamma_sq } => (gamma_sq + c * c) * t / (gamma_sq + t * t),
            Shape::Power { p } => t * (c / t).powf(2.0 - p),
            Shape::Abs => c,
        }
    }

    #[inline]
    fn outer_value(&self, t: f64) -> f64 {
        let c = self.c;
        let half_c_sq = 0.5 * c * c;
        match self.shape {
            Shape::Welsch { sigma_sq } => -0.5 * sigma_sq * ((c - t) * (c + t) / sigma_sq).exp_m1() + half_c_sq,
            Shape::Cauchy { gamma_sq } => {
                let k = gamma_sq + c * c;
                // ln((γ²+t²)/(γ²+c²)) = ln(1 + (t−c)(t+c)/(γ²+c²))
                0.5 * k * ((t - c) * (t + c) / k).ln_1p() + half_c_sq
            }
            Shape::Power { p } => c * c * ((t / c).powf(p) - 1.0) / p + half_c_sq,
            Shape::Abs => c * t - half_c_sq,
        }
    }

    /// `l(x)`.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let t = x.abs();
        if t <= self.c {
            0.5 * x * x
        } else {
            self.outer_value(t)
        }
    }

    /// `l'(x)`.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let t = x.abs();
        if t <= self.c {
            x
        } else {
            self.outer_slope(t).copysign(x)
        }
    }

    /// `l'(x)/x`, with `weight(0) = 1`.
    #[inline]
    pub fn weight(&self, x: f64) -> f64 {
        let t = x.abs();
        if t <= self.c {
            1.0
        } else {
            self.outer_slope(t) / t
        }
    }

    /// The proximity operator of the implicit regularizer.
    ///
    /// Equals `x − l'(x)`, rearranged so that it stays nonzero for `|x|`
    /// just above `c`.
    #[inline]
    pub fn shrink(&self, x: f64) -> f64 {
        let t = x.abs();
        let c = self.c;
        if t <= c {
            return 0.0;
        }
        let y = match self.shape {
            Shape::Welsch { sigma_sq } => -t * ((c - t) * (c + t) / sigma_sq).exp_m1(),
            Shape::Cauchy { gamma_sq } => t * (t - c) * (t + c) / (gamma_sq + t * t),
            // t·(1 − (c/t)^{2−p}) with ln(c/t) = −ln(1 + (t−c)/c)
            Shape::Power { p } => -t * (-(2.0 - p) * ((t - c) / c).ln_1p()).exp_m1(),
            Shape::Abs => t - c,
        };
        y.copysign(x)
    }

    /// Returns `(y, φ(y))` with `y = shrink(x)`.
    ///
    /// `φ(y) = l(x) − (x − y)²/2` holds for every `x` mapping to `y`.
    #[inline]
    pub fn dual_at_image(&self, x: f64) -> (f64, f64) {
        let y = self.shrink(x);
        let r = x - y;
        (y, self.value(x) - 0.5 * r * r)
    }
}

/// Scalar convenience wrappers over [`LossSpec::at`].
pub fn loss_value(spec: &LossSpec, c: f64, x: f64) -> Result<f64, EstimatorError> {
    Ok(spec.at(c)?.value(x))
}

pub fn loss_derivative(spec: &LossSpec, c: f64, x: f64) -> Result<f64, EstimatorError> {
    Ok(spec.at(c)?.derivative(x))
}

pub fn weight(spec: &LossSpec, c: f64, x: f64) -> Result<f64, EstimatorError> {
    Ok(spec.at(c)?.weight(x))
}

pub fn shrink(spec: &LossSpec, c: f64, x: f64) -> Result<f64, EstimatorError> {
    Ok(spec.at(c)?.shrink(x))
}

pub fn dual_at_image(spec: &LossSpec, c: f64, x: f64) -> Result<(f64, f64), EstimatorError> {
    Ok(spec.at(c)?.dual_at_image(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_kinds() -> Vec<LossSpec> {
        vec![
            LossSpec::how(),
            LossSpec::hoc(),
            LossSpec::hop(0.5),
            LossSpec::hop(1.0),
            LossSpec::Huber,
            LossSpec::How { sigma: Scale::Fixed(1.0) },
            LossSpec::Hoc { gamma: Scale::Fixed(1.0) },
        ]
    }

    fn how1() -> LossSpec {
        LossSpec::How { sigma: Scale::Fixed(1.0) }
    }

    fn hoc1() -> LossSpec {
        LossSpec::Hoc { gamma: Scale::Fixed(1.0) }
    }

    #[test]
    fn boundary_and_origin() {
        for spec in all_kinds() {
            assert_eq!(loss_value(&spec, 1.0, 1.0).unwrap(), 0.5);
            assert_eq!(loss_value(&spec, 1.0, 0.0).unwrap(), 0.0);
            assert_eq!(loss_derivative(&spec, 1.0, 0.5).unwrap(), 0.5);
            assert_eq!(weight(&spec, 2.0, 1.5).unwrap(), 1.0);
            assert_eq!(shrink(&spec, 1.0, 0.8).unwrap(), 0.0);
            assert_eq!(dual_at_image(&spec, 1.0, 0.5).unwrap(), (0.0, 0.0));
        }
    }

    #[test]
    fn huber_values() {
        let hop1 = LossSpec::hop(1.0);
        assert_eq!(loss_value(&hop1, 1.0, 3.0).unwrap(), 2.5);
        assert_eq!(loss_derivative(&hop1, 1.0, -3.0).unwrap(), -1.0);
        assert_eq!(shrink(&hop1, 1.0, 3.0).unwrap(), 2.0);
        assert_eq!(dual_at_image(&hop1, 1.0, 3.0).unwrap(), (2.0, 2.0));
    }

    #[test]
    fn hoc_values() {
        // Frozen from a 30-digit evaluation of the closed form.
        let v = loss_value(&hoc1(), 1.0, 3.0).unwrap();
        assert!((v - 2.109_437_912_434_100_4).abs() < 1e-14);
        assert!((weight(&hoc1(), 1.0, 3.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((shrink(&hoc1(), 1.0, 3.0).unwrap() - 2.4).abs() < 1e-15);
        let (y, phi) = dual_at_image(&hoc1(), 1.0, 3.0).unwrap();
        assert!((y - 2.4).abs() < 1e-15);
        assert!((phi - 1.929_437_912_434_100_4).abs() < 1e-14);
    }

    #[test]
    fn hoc_weight_matches_finite_difference() {
        let l = hoc1().at(1.0).unwrap();
        let h = 1e-6;
        let fd = (l.value(3.0 + h) - l.value(3.0 - h)) / (2.0 * h);
        assert!((fd / 3.0 - 0.2).abs() < 1e-8);
    }

    #[test]
    fn how_values() {
        let e3 = (-3.0f64).exp();
        assert!((loss_derivative(&how1(), 1.0, 2.0).unwrap() - 2.0 * e3).abs() < 1e-16);
        assert!((weight(&how1(), 1.0, 2.0).unwrap() - e3).abs() < 1e-16);
        assert!((shrink(&how1(), 1.0, 2.0).unwrap() - (2.0 - 2.0 * e3)).abs() < 1e-15);
        assert!((loss_value(&how1(), 1.0, 2.0).unwrap() - 0.975_106_465_816_068).abs() < 1e-14);
    }

    #[test]
    fn coefficients_make_knot_smooth() {
        for spec in all_kinds() {
            for c in [0.3, 1.0, 4.0] {
                let l = spec.at(c).unwrap();
                let LossCoefficients { a, b } = l.coefficients();
                assert!(a > 0.0 && a.is_finite());
                // the outer branch written literally must agree with the simplified one
                let t = 1.7 * c;
                let literal = match l.shape {
                    Shape::Welsch { sigma_sq } => a * (-0.5 * sigma_sq * (-t * t / sigma_sq).exp_m1()) + b,
                    Shape::Cauchy { gamma_sq } => a * (1.0 + t * t / gamma_sq).ln() + b,
                    Shape::Power { p } => a * t.powf(p) + b,
                    Shape::Abs => a * t + b,
                };
                assert!((literal - l.value(t)).abs() < 1e-12 * l.value(t).max(1.0), "{spec} c={c}");
                let at_knot = match l.shape {
                    Shape::Welsch { sigma_sq } => a * (-0.5 * sigma_sq * (-c * c / sigma_sq).exp_m1()) + b,
                    Shape::Cauchy { gamma_sq } => a * (1.0 + c * c / gamma_sq).ln() + b,
                    Shape::Power { p } => a * c.powf(p) + b,
                    Shape::Abs => a * c + b,
                };
                assert!((at_knot - 0.5 * c * c).abs() < 1e-12 * c * c);
            }
        }
    }

    #[test]
    fn how_is_bounded() {
        for sigma in [0.1, 1.0, 5.0] {
            let spec = LossSpec::How { sigma: Scale::Fixed(sigma) };
            let l = spec.at(1.0).unwrap();
            let bound = 0.5 * sigma * sigma + 0.5;
            for k in 0..2000 {
                let x = k as f64 * 0.05;
                assert!(l.value(x) <= bound);
            }
            assert!(l.value(1e300) <= bound);
        }
    }

    #[test]
    fn small_sigma_does_not_overflow() {
        let spec = LossSpec::How { sigma: Scale::Fixed(0.01) };
        let l = spec.at(1.0).unwrap();
        assert!(l.coefficients().a.is_infinite());
        for x in [1.0000001, 1.5, 10.0, -3.0] {
            assert!(l.value(x).is_finite());
            assert!(l.derivative(x).is_finite());
            assert!(l.shrink(x).is_finite());
        }
    }

    #[test]
    fn weights_decrease_outside() {
        for spec in all_kinds() {
            let l = spec.at(1.0).unwrap();
            let mut prev = 1.0;
            for k in 1..400 {
                let x = 1.0 + k as f64 * 0.05;
                let w = l.weight(x);
                assert!(w < 1.0 && w > 0.0, "{spec} x={x} w={w}");
                assert!(w <= prev);
                prev = w;
            }
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(matches!(LossSpec::hop(0.0).at(1.0), Err(EstimatorError::Exponent(_))));
        assert!(matches!(LossSpec::hop(1.5).at(1.0), Err(EstimatorError::Exponent(_))));
        assert!(matches!(LossSpec::hop(f64::NAN).validate(), Err(EstimatorError::Exponent(_))));
        assert!(matches!(
            LossSpec::How { sigma: Scale::Fixed(-1.0) }.at(1.0),
            Err(EstimatorError::Scale { name: "sigma", .. })
        ));
        assert!(matches!(
            LossSpec::Hoc { gamma: Scale::Fixed(0.0) }.at(1.0),
            Err(EstimatorError::Scale { name: "gamma", .. })
        ));
        assert!(matches!(LossSpec::Huber.at(0.0), Err(EstimatorError::Threshold(_))));
        assert!(matches!(LossSpec::Huber.at(f64::INFINITY), Err(EstimatorError::Threshold(_))));
    }

    #[test]
    fn tied_scale_tracks_threshold() {
        let a = LossSpec::how().at(2.0).unwrap();
        let b = LossSpec::How { sigma: Scale::Fixed(2.0) }.at(2.0).unwrap();
        assert_eq!(a, b);
        assert!(LossSpec::hoc().follows_threshold());
        assert!(!LossSpec::hop(0.3).follows_threshold());
    }

    #[test]
    fn general_power_path_at_p_one() {
        let general = HybridLoss { shape: Shape::Power { p: 1.0 }, c: 1.3 };
        let huber = LossSpec::Huber.at(1.3).unwrap();
        for k in 0..500 {
            let x = -13.0 + k as f64 * 0.052;
            let scale = huber.value(x).abs().max(1.0);
            assert!((general.value(x) - huber.value(x)).abs() <= 1e-14 * scale * 8.0);
            assert!((general.shrink(x) - huber.shrink(x)).abs() <= 1e-14 * x.abs().max(1.0) * 8.0);
        }
    }

    #[test]
    fn display_names() {
        assert_eq!(LossSpec::how().to_string(), "how");
        assert_eq!(LossSpec::hop(0.6).to_string(), "hop(p=0.6)");
        assert_eq!(LossSpec::Hoc { gamma: Scale::Fixed(2.0) }.to_string(), "hoc(gamma=2)");
    }
}
