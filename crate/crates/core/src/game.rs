//! Model parameters, the two utility functions and the users' best response.

use serde::{Deserialize, Serialize};

use crate::breach::BreachModel;
use crate::error::Error;

/// Absolute tolerance, in money units, for indifference and threshold tests.
///
/// Applied as `MONEY_TOL * max(1, magnitude)` where `magnitude` is the size
/// of the quantities being compared, so it stays one ulp-ish step above
/// rounding noise for inputs up to [`MAX_MAGNITUDE`].
pub const MONEY_TOL: f64 = 1e-12;

/// Largest accepted absolute value of any monetary input.
pub const MAX_MAGNITUDE: f64 = 1e9;

pub(crate) fn tol(magnitude: f64) -> f64 {
    MONEY_TOL * magnitude.abs().max(1.0)
}

/// Scalar parameters of the game with homogeneous users.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameParams {
    /// Number of users `k`.
    #[serde(rename = "k")]
    pub users: u32,
    /// Fixed service cost `S`.
    #[serde(rename = "S")]
    pub service_cost: f64,
    /// Platform loss on a breach, `F`.
    #[serde(rename = "F")]
    pub platform_loss: f64,
    /// A user's valuation of their own data, `V`.
    #[serde(rename = "V")]
    pub data_value: f64,
    /// A user's valuation of the free services, `W`.
    #[serde(rename = "W")]
    pub service_value: f64,
    /// A user's loss on a breach, `L`.
    #[serde(rename = "L")]
    pub user_loss: f64,
    /// Scale factor for the low sharing level, in `(0, 1)`.
    pub alpha: f64,
    /// Revenue when every user shares at the high level, `U(k, 0)`.
    pub revenue_high: f64,
    /// Revenue when every user shares at the low level, `U(k, k)`.
    pub revenue_low: f64,
}

impl GameParams {
    /// `V - W`.
    pub fn net_valuation(&self) -> f64 {
        self.data_value - self.service_value
    }

    pub fn users_f64(&self) -> f64 {
        f64::from(self.users)
    }

    /// Checks every field; errors carry the field name as path.
    pub fn validate(&self) -> Result<(), Error> {
        if self.users < 1 {
            return Err(Error::invalid("k", "must be at least 1"));
        }
        let money = [
            ("S", self.service_cost),
            ("F", self.platform_loss),
            ("V", self.data_value),
            ("W", self.service_value),
            ("L", self.user_loss),
        ];
        for (name, value) in money {
            if !value.is_finite() {
                return Err(Error::invalid(name, format!("must be finite, got {value}")));
            }
            if value < 0.0 {
                return Err(Error::invalid(
                    name,
                    format!("must be non-negative, got {value}"),
                ));
            }
            if value > MAX_MAGNITUDE {
                return Err(Error::invalid(
                    name,
                    format!("exceeds {MAX_MAGNITUDE:e}, got {value}"),
                ));
            }
        }
        for (name, value) in [
            ("revenue_high", self.revenue_high),
            ("revenue_low", self.revenue_low),
        ] {
            if !value.is_finite() || value.abs() > MAX_MAGNITUDE {
                return Err(Error::invalid(
                    name,
                    format!("must be finite with |x| <= {MAX_MAGNITUDE:e}, got {value}"),
                ));
            }
        }
        if f64::from(self.users) > MAX_MAGNITUDE {
            return Err(Error::invalid("k", format!("exceeds {MAX_MAGNITUDE:e}")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(
                "alpha",
                format!("must lie in the open interval (0, 1), got {}", self.alpha),
            ));
        }
        Ok(())
    }
}

/// Platform choices `(I, p0, p1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlatformDecision {
    pub investment: f64,
    /// Dividend for the low sharing level.
    pub p0: f64,
    /// Dividend for the high sharing level.
    pub p1: f64,
}

impl PlatformDecision {
    pub fn new(investment: f64, p0: f64, p1: f64) -> Result<Self, Error> {
        for (name, value) in [("investment", investment), ("p0", p0), ("p1", p1)] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::invalid(
                    name,
                    format!("must be finite and non-negative, got {value}"),
                ));
            }
        }
        Ok(PlatformDecision { investment, p0, p1 })
    }
}

/// A user's data-sharing choice `c_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharingLevel {
    /// `c_i = 0`
    Low,
    /// `c_i = 1`
    High,
}

impl SharingLevel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SharingLevel::Low => "low",
            SharingLevel::High => "high",
        }
    }
}

/// Outcome of the users' inner problem for a fixed platform decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    /// Utility-maximizing level. On a tie this is `High`; callers resolve ties
    /// in the platform's favor with [`BestResponse::resolve_for_platform`].
    pub choice: SharingLevel,
    pub tied: bool,
    /// The maximized utility is non-negative.
    pub participates: bool,
    pub utility: f64,
}

impl BestResponse {
    /// Level the users pick once ties are broken toward the platform's higher
    /// utility (and toward `High` if the platform is indifferent too).
    pub fn resolve_for_platform(
        &self,
        params: &GameParams,
        model: &BreachModel,
        decision: &PlatformDecision,
    ) -> SharingLevel {
        if !self.tied {
            return self.choice;
        }
        let high = platform_utility(params, model, decision, SharingLevel::High);
        let low = platform_utility(params, model, decision, SharingLevel::Low);
        if low > high {
            SharingLevel::Low
        } else {
            SharingLevel::High
        }
    }
}

/// `V - W + B(I) L`: a user's net cost of sharing fully.
pub fn effective_valuation(params: &GameParams, model: &BreachModel, investment: f64) -> f64 {
    params.net_valuation() + model.prob(investment) * params.user_loss
}

/// Expected platform utility when every user shares at `level`.
pub fn platform_utility(
    params: &GameParams,
    model: &BreachModel,
    decision: &PlatformDecision,
    level: SharingLevel,
) -> f64 {
    let k = params.users_f64();
    let (revenue, payout) = match level {
        SharingLevel::Low => (params.revenue_low, decision.p0 * k),
        SharingLevel::High => (params.revenue_high, decision.p1 * k),
    };
    revenue
        - model.prob(decision.investment) * params.platform_loss
        - decision.investment
        - params.service_cost
        - payout
}

/// A single user's expected utility at sharing level `level`.
pub fn user_utility(
    params: &GameParams,
    model: &BreachModel,
    decision: &PlatformDecision,
    level: SharingLevel,
) -> f64 {
    let v = effective_valuation(params, model, decision.investment);
    level_utility(params.alpha, v, decision, level)
}

fn level_utility(
    alpha: f64,
    valuation: f64,
    decision: &PlatformDecision,
    level: SharingLevel,
) -> f64 {
    match level {
        SharingLevel::High => decision.p1 - valuation,
        SharingLevel::Low => decision.p0 - alpha * valuation,
    }
}

pub fn user_best_response(
    params: &GameParams,
    model: &BreachModel,
    decision: &PlatformDecision,
) -> BestResponse {
    let v = effective_valuation(params, model, decision.investment);
    let high = level_utility(params.alpha, v, decision, SharingLevel::High);
    let low = level_utility(params.alpha, v, decision, SharingLevel::Low);
    let magnitude = decision.p0.abs().max(decision.p1.abs()).max(v.abs());
    let eps = tol(magnitude);
    let tied = (high - low).abs() <= eps;
    let (choice, utility) = if tied || high > low {
        (SharingLevel::High, high.max(low))
    } else {
        (SharingLevel::Low, low)
    };
    BestResponse {
        choice,
        tied,
        participates: utility >= -eps,
        utility,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn base_params() -> GameParams {
        GameParams {
            users: 10,
            service_cost: 10.0,
            platform_loss: 100.0,
            data_value: 20.0,
            service_value: 30.0,
            user_loss: 50.0,
            alpha: 0.5,
            revenue_high: 500.0,
            revenue_low: 300.0,
        }
    }

    fn model() -> BreachModel {
        BreachModel::exponential(0.5, 0.1).unwrap()
    }

    #[test]
    fn effective_valuation_examples() {
        let p = base_params();
        assert!((effective_valuation(&p, &model(), 0.0) - 15.0).abs() < 1e-12);

        let flat = GameParams {
            data_value: 30.0,
            user_loss: 0.0,
            ..p
        };
        assert_eq!(effective_valuation(&flat, &model(), 7.0), 0.0);

        let near = GameParams {
            data_value: 29.9,
            ..p
        };
        let i1 = 10.0 * 30.0_f64.ln();
        assert!((effective_valuation(&near, &model(), i1) - (-0.1 + 50.0 / 60.0)).abs() < 1e-12);
    }

    #[test]
    fn platform_utility_examples() {
        let p = base_params();
        let i = 10.0 * 2.5_f64.ln();
        let d = PlatformDecision::new(i, 0.0, 0.0).unwrap();
        let u = platform_utility(&p, &model(), &d, SharingLevel::High);
        assert!((u - (500.0 - 20.0 - i - 10.0)).abs() < 1e-9);

        let zero = GameParams {
            service_cost: 0.0,
            platform_loss: 0.0,
            revenue_high: 0.0,
            revenue_low: 0.0,
            ..p
        };
        let d0 = PlatformDecision::new(0.0, 0.0, 0.0).unwrap();
        assert_eq!(
            platform_utility(&zero, &model(), &d0, SharingLevel::High),
            0.0
        );
        assert_eq!(
            platform_utility(&zero, &model(), &d0, SharingLevel::Low),
            0.0
        );

        let i4 = 10.0 * 17.5_f64.ln();
        let p0 = 0.5 * (10.0 + 50.0 / 35.0);
        let d = PlatformDecision::new(i4, p0, 0.0).unwrap();
        let u = platform_utility(&p, &model(), &d, SharingLevel::Low);
        assert!((u - (300.0 - 100.0 / 35.0 - i4 - 10.0 - 10.0 * p0)).abs() < 1e-9);
        assert!((u - 201.38).abs() < 0.01);
    }

    fn valuation_params(net: f64, alpha: f64) -> GameParams {
        GameParams {
            data_value: 30.0 + net,
            service_value: 30.0,
            user_loss: 0.0,
            alpha,
            ..base_params()
        }
    }

    #[test]
    fn user_utility_examples() {
        let p = valuation_params(3.0, 0.5);
        let d = PlatformDecision::new(0.0, 0.0, 5.0).unwrap();
        assert!((user_utility(&p, &model(), &d, SharingLevel::High) - 2.0).abs() < 1e-12);

        let d = PlatformDecision::new(0.0, 1.5, 0.0).unwrap();
        assert_eq!(user_utility(&p, &model(), &d, SharingLevel::Low), 0.0);
        let d = PlatformDecision::new(0.0, 0.0, 3.0).unwrap();
        assert_eq!(user_utility(&p, &model(), &d, SharingLevel::High), 0.0);
    }

    #[test]
    fn best_response_examples() {
        let p = valuation_params(3.0, 0.5);
        let br = user_best_response(&p, &model(), &PlatformDecision::new(0.0, 0.0, 5.0).unwrap());
        assert_eq!(br.choice, SharingLevel::High);
        assert!(!br.tied && br.participates);

        let p = valuation_params(0.0, 0.5);
        let br = user_best_response(&p, &model(), &PlatformDecision::new(0.0, 0.0, 0.0).unwrap());
        assert!(br.tied && br.participates);

        let p = valuation_params(4.0, 0.5);
        let br = user_best_response(&p, &model(), &PlatformDecision::new(0.0, 0.0, 0.0).unwrap());
        assert_eq!(br.choice, SharingLevel::Low);
        assert!(!br.tied);
        assert!(!br.participates);
        assert!((br.utility + 2.0).abs() < 1e-12);
    }

    #[test]
    fn ties_resolve_toward_platform() {
        // V = 0 => both levels give zero utility; platform prefers the larger revenue.
        let p = GameParams {
            revenue_low: 900.0,
            ..valuation_params(0.0, 0.5)
        };
        let d = PlatformDecision::new(0.0, 0.0, 0.0).unwrap();
        let br = user_best_response(&p, &model(), &d);
        assert_eq!(br.resolve_for_platform(&p, &model(), &d), SharingLevel::Low);
        let p = GameParams {
            revenue_low: 100.0,
            ..p
        };
        assert_eq!(
            br.resolve_for_platform(&p, &model(), &d),
            SharingLevel::High
        );
    }

    #[test]
    fn validation_names_fields() {
        let bad = GameParams {
            alpha: 1.0,
            ..base_params()
        };
        assert!(matches!(bad.validate(), Err(Error::Invalid { path, .. }) if path == "alpha"));
        let bad = GameParams {
            users: 0,
            ..base_params()
        };
        assert!(matches!(bad.validate(), Err(Error::Invalid { path, .. }) if path == "k"));
        let bad = GameParams {
            user_loss: -1.0,
            ..base_params()
        };
        assert!(matches!(bad.validate(), Err(Error::Invalid { path, .. }) if path == "L"));
        let bad = GameParams {
            platform_loss: 2e9,
            ..base_params()
        };
        assert!(bad.validate().is_err());
        assert!(base_params().validate().is_ok());
        assert!(PlatformDecision::new(-1.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn utility_affine_in_prices(
            i in 0.0f64..100.0, p0 in 0.0f64..50.0, p1 in 0.0f64..50.0, delta in 0.0f64..10.0,
        ) {
            let p = base_params();
            let m = model();
            let d = PlatformDecision::new(i, p0, p1).unwrap();
            let d_hi = PlatformDecision::new(i, p0, p1 + delta).unwrap();
            let d_lo = PlatformDecision::new(i, p0 + delta, p1).unwrap();
            let hi = SharingLevel::High;
            let lo = SharingLevel::Low;
            prop_assert!((user_utility(&p, &m, &d_hi, hi) - user_utility(&p, &m, &d, hi) - delta).abs() < 1e-9);
            prop_assert!((user_utility(&p, &m, &d_hi, lo) - user_utility(&p, &m, &d, lo)).abs() < 1e-12);
            prop_assert!((user_utility(&p, &m, &d_lo, lo) - user_utility(&p, &m, &d, lo) - delta).abs() < 1e-9);
            prop_assert!((user_utility(&p, &m, &d_lo, hi) - user_utility(&p, &m, &d, hi)).abs() < 1e-12);
        }

        #[test]
        fn raising_a_price_never_drives_users_away(
            i in 0.0f64..100.0, p0 in 0.0f64..50.0, p1 in 0.0f64..50.0, delta in 1e-6f64..10.0,
        ) {
            let p = base_params();
            let m = model();
            let d = PlatformDecision::new(i, p0, p1).unwrap();
            let before = user_best_response(&p, &m, &d);
            let up_high = user_best_response(&p, &m, &PlatformDecision { p1: p1 + delta, ..d });
            if before.choice == SharingLevel::High && !before.tied {
                prop_assert_eq!(up_high.choice, SharingLevel::High);
            }
            let up_low = user_best_response(&p, &m, &PlatformDecision { p0: p0 + delta, ..d });
            if before.choice == SharingLevel::Low && !before.tied {
                prop_assert_eq!(up_low.choice, SharingLevel::Low);
            }
        }

        #[test]
        fn platform_utility_monotone(
            i in 0.0f64..100.0, p0 in 0.0f64..50.0, p1 in 0.0f64..50.0, delta in 1e-3f64..10.0,
        ) {
            let p = base_params();
            let m = model();
            let d = PlatformDecision::new(i, p0, p1).unwrap();
            let lo = SharingLevel::Low;
            let hi = SharingLevel::High;
            let more_p0 = PlatformDecision { p0: p0 + delta, ..d };
            let more_p1 = PlatformDecision { p1: p1 + delta, ..d };
            prop_assert!(platform_utility(&p, &m, &more_p0, lo) < platform_utility(&p, &m, &d, lo));
            prop_assert!(platform_utility(&p, &m, &more_p1, hi) < platform_utility(&p, &m, &d, hi));
            let costlier = GameParams { service_cost: p.service_cost + delta, ..p };
            prop_assert!(platform_utility(&costlier, &m, &d, hi) < platform_utility(&p, &m, &d, hi));
        }

        #[test]
        fn valuation_monotone_in_investment(a in 0.0f64..100.0, gap in 1e-3f64..10.0, loss in 0.0f64..100.0) {
            let p = GameParams { user_loss: loss, ..base_params() };
            let m = model();
            let before = effective_valuation(&p, &m, a);
            let after = effective_valuation(&p, &m, a + gap);
            if loss > 0.0 {
                prop_assert!(after < before);
            } else {
                prop_assert_eq!(after, before);
            }
        }
    }
}
