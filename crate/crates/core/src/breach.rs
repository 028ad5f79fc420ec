//! Breach-probability curves.
//!
//! A [`BreachModel`] maps a protection investment `I >= 0` to the probability
//! `B(I)` that a data breach occurs. Every family shipped here is positive,
//! strictly decreasing, strictly convex and vanishes at infinity, and has
//! closed-form inverses for both `B` and `B'`. The closed-form solver is built
//! entirely out of those two inverses.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Functional form of the breach curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreachFamily {
    /// `B(I) = beta * exp(-rate * I)`.
    Exponential,
    /// `B(I) = beta * (1 + I / scale)^(-rate)`.
    PowerLaw,
}

impl BreachFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            BreachFamily::Exponential => "exponential",
            BreachFamily::PowerLaw => "power_law",
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBreachModel {
    family: BreachFamily,
    beta: f64,
    rate: f64,
    #[serde(default = "default_scale")]
    scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

/// A validated breach-probability curve.
///
/// Construction enforces `beta in (0, 1]`, `rate > 0` and `scale > 0`, so
/// evaluation never has to re-check the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBreachModel")]
pub struct BreachModel {
    family: BreachFamily,
    beta: f64,
    rate: f64,
    scale: f64,
}

impl TryFrom<RawBreachModel> for BreachModel {
    type Error = Error;

    fn try_from(raw: RawBreachModel) -> Result<Self, Error> {
        BreachModel::new(raw.family, raw.beta, raw.rate, raw.scale)
    }
}

impl BreachModel {
    pub fn new(family: BreachFamily, beta: f64, rate: f64, scale: f64) -> Result<Self, Error> {
        if !(beta.is_finite() && beta > 0.0 && beta <= 1.0) {
            return Err(Error::invalid(
                "beta",
                format!("must lie in (0, 1], got {beta}"),
            ));
        }
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(
                "rate",
                format!("must be positive, got {rate}"),
            ));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(
                "scale",
                format!("must be positive, got {scale}"),
            ));
        }
        Ok(BreachModel {
            family,
            beta,
            rate,
            scale,
        })
    }

    pub fn exponential(beta: f64, rate: f64) -> Result<Self, Error> {
        Self::new(BreachFamily::Exponential, beta, rate, 1.0)
    }

    pub fn power_law(beta: f64, exponent: f64, scale: f64) -> Result<Self, Error> {
        Self::new(BreachFamily::PowerLaw, beta, exponent, scale)
    }

    pub fn family(&self) -> BreachFamily {
        self.family
    }

    /// Baseline probability `B(0)`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Checked `B(I)`; rejects negative or non-finite investment.
    pub fn breach_prob(&self, investment: f64) -> Result<f64, Error> {
        check_investment(investment)?;
        Ok(self.prob(investment))
    }

    /// Checked `B'(I)`; rejects negative or non-finite investment.
    pub fn breach_prob_slope(&self, investment: f64) -> Result<f64, Error> {
        check_investment(investment)?;
        Ok(self.slope(investment))
    }

    /// `B(I)` for an investment already known to be non-negative.
    pub fn prob(&self, investment: f64) -> f64 {
        debug_assert!(investment >= 0.0, "negative investment {investment}");
        match self.family {
            BreachFamily::Exponential => self.beta * (-self.rate * investment).exp(),
            BreachFamily::PowerLaw => self.beta * (1.0 + investment / self.scale).powf(-self.rate),
        }
    }

    /// `B'(I)`, strictly negative.
    pub fn slope(&self, investment: f64) -> f64 {
        debug_assert!(investment >= 0.0, "negative investment {investment}");
        match self.family {
            BreachFamily::Exponential => -self.rate * self.beta * (-self.rate * investment).exp(),
            BreachFamily::PowerLaw => {
                let g = self.rate;
                -(self.beta * g / self.scale) * (1.0 + investment / self.scale).powf(-g - 1.0)
            }
        }
    }

    /// `B''(I)`, strictly positive.
    pub fn curvature(&self, investment: f64) -> f64 {
        debug_assert!(investment >= 0.0, "negative investment {investment}");
        match self.family {
            BreachFamily::Exponential => {
                self.rate * self.rate * self.beta * (-self.rate * investment).exp()
            }
            BreachFamily::PowerLaw => {
                let g = self.rate;
                let c = self.scale;
                (self.beta * g * (g + 1.0) / (c * c)) * (1.0 + investment / c).powf(-g - 2.0)
            }
        }
    }

    /// The unique `I >= 0` with `B(I) = target`, or `None` when
    /// `target` lies outside `(0, B(0)]`.
    pub fn inverse_breach(&self, target: f64) -> Result<Option<f64>, Error> {
        if !target.is_finite() {
            return Err(Error::NonFinite {
                what: "breach probability target",
                value: target,
            });
        }
        if target <= 0.0 || target > self.beta {
            return Ok(None);
        }
        let ratio = self.beta / target;
        let investment = match self.family {
            BreachFamily::Exponential => ratio.ln() / self.rate,
            BreachFamily::PowerLaw => self.scale * (ratio.powf(1.0 / self.rate) - 1.0),
        };
        Ok(Some(investment.max(0.0)))
    }

    /// The unique `I >= 0` with `B'(I) = slope`, or `None` when `slope` is
    /// steeper than `B'(0)` or non-negative (unattainable for a convex,
    /// decreasing curve).
    pub fn inverse_breach_slope(&self, slope: f64) -> Result<Option<f64>, Error> {
        if !slope.is_finite() {
            return Err(Error::NonFinite {
                what: "breach slope target",
                value: slope,
            });
        }
        let initial = self.slope(0.0);
        if slope >= 0.0 || slope < initial {
            return Ok(None);
        }
        // initial / slope >= 1 on the admissible range
        let ratio = initial / slope;
        let investment = match self.family {
            BreachFamily::Exponential => ratio.ln() / self.rate,
            BreachFamily::PowerLaw => self.scale * (ratio.powf(1.0 / (self.rate + 1.0)) - 1.0),
        };
        Ok(Some(investment.max(0.0)))
    }
}

fn check_investment(investment: f64) -> Result<(), Error> {
    if !investment.is_finite() {
        return Err(Error::NonFinite {
            what: "investment",
            value: investment,
        });
    }
    if investment < 0.0 {
        return Err(Error::NegativeInvestment(investment));
    }
    Ok(())
}

/// Generic inverse of a strictly decreasing function on `[0, inf)` by
/// bisection.
///
/// Returns the `I >= 0` with `f(I) = target` to within `tol` in `I`, or
/// `None` when `target > f(0)` or no sign change is found before the bracket
/// overflows. The upper end of the bracket starts at 1 and doubles until
/// `f(hi) <= target`. Intended for breach families without closed-form
/// inverses.
pub fn bisect_decreasing<F>(f: F, target: f64, tol: f64) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    let f0 = f(0.0);
    if target > f0 {
        return None;
    }
    if target == f0 {
        return Some(0.0);
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while f(hi) > target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e300 {
            return None;
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exp_model() -> BreachModel {
        BreachModel::exponential(0.5, 0.1).unwrap()
    }

    fn pow_model() -> BreachModel {
        BreachModel::power_law(0.5, 2.0, 1.0).unwrap()
    }

    #[test]
    fn breach_prob_examples() {
        let m = exp_model();
        assert_eq!(m.breach_prob(0.0).unwrap(), 0.5);
        // 0.5 * e^-1
        assert!((m.breach_prob(10.0).unwrap() - 0.183_939_720_585_721_2).abs() < 1e-15);
        assert!((pow_model().breach_prob(1.0).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn slope_examples() {
        let m = exp_model();
        assert!((m.breach_prob_slope(0.0).unwrap() + 0.05).abs() < 1e-15);
        assert!((m.breach_prob_slope(10.0).unwrap() + 0.018_393_972_058_572_12).abs() < 1e-15);
        assert!((pow_model().breach_prob_slope(0.0).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_or_nan_investment() {
        let m = exp_model();
        assert!(matches!(
            m.breach_prob(-1.0),
            Err(Error::NegativeInvestment(_))
        ));
        assert!(matches!(
            m.breach_prob_slope(-0.5),
            Err(Error::NegativeInvestment(_))
        ));
        assert!(m.breach_prob(f64::NAN).is_err());
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(BreachModel::exponential(0.0, 0.1).is_err());
        assert!(BreachModel::exponential(1.5, 0.1).is_err());
        assert!(BreachModel::exponential(0.5, 0.0).is_err());
        assert!(BreachModel::power_law(0.5, 2.0, -1.0).is_err());
        assert!(BreachModel::exponential(1.0, 0.1).is_ok());
    }

    #[test]
    fn inverse_examples() {
        let m = exp_model();
        assert_eq!(m.inverse_breach(0.5).unwrap(), Some(0.0));
        assert_eq!(m.inverse_breach(0.6).unwrap(), None);
        assert_eq!(m.inverse_breach(0.0).unwrap(), None);
        let i = m.inverse_breach(0.2).unwrap().unwrap();
        assert!((i - 10.0 * 2.5_f64.ln()).abs() < 1e-12);
        // independent bisection
        let b = bisect_decreasing(|x| 0.5 * (-0.1 * x).exp(), 0.2, 1e-12).unwrap();
        assert!((i - b).abs() < 1e-9);
        assert!(m.inverse_breach(f64::INFINITY).is_err());
    }

    #[test]
    fn inverse_slope_examples() {
        let m = exp_model();
        assert_eq!(m.inverse_breach_slope(-0.05).unwrap(), Some(0.0));
        let i = m.inverse_breach_slope(-0.01).unwrap().unwrap();
        assert!((i - 10.0 * 5.0_f64.ln()).abs() < 1e-12);
        // bisection on |B'| which is decreasing
        let b = bisect_decreasing(|x| 0.05 * (-0.1 * x).exp(), 0.01, 1e-12).unwrap();
        assert!((i - b).abs() < 1e-9);
        assert_eq!(m.inverse_breach_slope(-0.1).unwrap(), None);
        assert_eq!(m.inverse_breach_slope(0.0).unwrap(), None);
        assert_eq!(m.inverse_breach_slope(0.3).unwrap(), None);
        assert!(m.inverse_breach_slope(f64::NAN).is_err());
    }

    #[test]
    fn power_law_inverses_match_bisection() {
        let m = BreachModel::power_law(0.8, 1.5, 20.0).unwrap();
        let t = 0.1;
        let i = m.inverse_breach(t).unwrap().unwrap();
        let b = bisect_decreasing(|x| m.prob(x), t, 1e-12).unwrap();
        assert!((i - b).abs() < 1e-8, "{i} vs {b}");
        let s = -0.001;
        let i = m.inverse_breach_slope(s).unwrap().unwrap();
        let b = bisect_decreasing(|x| -m.slope(x), -s, 1e-12).unwrap();
        assert!((i - b).abs() < 1e-8, "{i} vs {b}");
    }

    #[test]
    fn bisection_rejects_target_above_start() {
        assert_eq!(bisect_decreasing(|x| (-x).exp(), 2.0, 1e-12), None);
        assert_eq!(bisect_decreasing(|x| (-x).exp(), 1.0, 1e-12), Some(0.0));
    }

    #[test]
    fn serde_roundtrip_defaults_scale() {
        let m: BreachModel =
            serde_json::from_str(r#"{"family":"exponential","beta":0.5,"rate":0.1}"#).unwrap();
        assert_eq!(m, exp_model());
        let bad = serde_json::from_str::<BreachModel>(
            r#"{"family":"power_law","beta":0.5,"rate":2,"scale":0}"#,
        );
        assert!(bad.is_err());
    }

    fn any_model() -> impl Strategy<Value = BreachModel> {
        prop_oneof![
            (0.05f64..1.0, 1e-4f64..0.05)
                .prop_map(|(b, r)| BreachModel::exponential(b, r).unwrap()),
            (0.05f64..1.0, 0.2f64..5.0, 0.1f64..100.0)
                .prop_map(|(b, g, c)| BreachModel::power_law(b, g, c).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn decreasing_and_positive(m in any_model(), a in 0.0f64..1e4, gap in 1e-3f64..10.0) {
            let lo = m.prob(a);
            let hi = m.prob(a + gap);
            prop_assert!(hi > 0.0);
            prop_assert!(hi < lo);
            prop_assert!(m.slope(a) < 0.0);
            prop_assert!(m.curvature(a) > 0.0);
        }

        #[test]
        fn inverse_slope_absent_exactly_outside_range(m in any_model(), s in -2.0f64..0.5) {
            let absent = m.inverse_breach_slope(s).unwrap().is_none();
            prop_assert_eq!(absent, s < m.slope(0.0) || s >= 0.0);
        }
    }
}
