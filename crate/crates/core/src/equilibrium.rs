//! Closed-form Stackelberg solution.
//!
//! For a fixed induced sharing level the platform's problem reduces to a
//! one-dimensional program in the investment `I`. The optimal dividend is a
//! multiple of the effective valuation `v(I) = V - W + B(I) L`:
//!
//! | level | `v >= 0` side       | `v <= 0` side             |
//! |-------|---------------------|---------------------------|
//! | High  | `p1 = v`            | `p1 = 0`                  |
//! | Low   | `p0 = alpha * v`    | `p0 = (alpha - 1) * v`    |
//!
//! Writing `m` for that multiple, each side minimizes the convex cost
//! `B(I) (F + m L k) + I + m (V - W) k` under the matching sign constraint on
//! `v(I)`. The stationary point of each side (`I1`/`I4` on the upper side,
//! `I3`/`I5` on the lower side) comes from `B'^-1`, and the constraint
//! boundary `I2` from `B^-1`. The regime tables below pick among them by
//! comparing `L` with `-(V - W) / B(.)` thresholds.

use serde::{Deserialize, Serialize};

use crate::breach::BreachModel;
use crate::game::{
    effective_valuation, platform_utility, tol, user_best_response, user_utility, GameParams,
    PlatformDecision, SharingLevel,
};

/// Relative width used to annotate a solution as sitting on a regime boundary.
pub const BOUNDARY_REL_TOL: f64 = 1e-9;

/// Stationary and boundary investments of the reduced programs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateInvestments {
    /// `B'^-1(-1 / (F + L k))`
    pub i1: Option<f64>,
    /// `B^-1(-(V - W) / L)`, only for `L > 0` and `V < W`.
    pub i2: Option<f64>,
    /// `B'^-1(-1 / F)`
    pub i3: Option<f64>,
    /// `B'^-1(-1 / (F + alpha L k))`
    pub i4: Option<f64>,
    /// `B'^-1(-1 / (F + (alpha - 1) L k))`, absent when the coefficient is `<= 0`.
    pub i5: Option<f64>,
}

/// Which side of the valuation constraint a sub-case optimizes over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuationSide {
    /// `v(I) >= 0`: the dividend compensates the users' net loss.
    NonNegative,
    /// `v(I) <= 0`: users gain from sharing before any dividend.
    NonPositive,
}

/// Row of the regime table that produced a case's optimum.
///
/// The label identifies the investment rule and the dividend formula:
///
/// * `PayDividend`: stationary point of the upper side (`I1` or `I4`), dividend `m_up * v`.
/// * `InvestToBoundary`: `I2`, where `v = 0`; no dividend.
/// * `InvestUnconstrained`: stationary point of the lower side (`I3` or `I5`),
///   dividend `m_down * v` (zero for the high level).
/// * `NoInvestPay`: `I = 0` on the upper side, dividend `m_up * v(0)`.
/// * `NoInvestNoPay`: `I = 0` on the lower side, dividend `m_down * v(0)`. For
///   the low level this is the positive incentive payment `(alpha - 1) v(0)`;
///   no participation dividend is paid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    PayDividend,
    InvestToBoundary,
    InvestUnconstrained,
    NoInvestPay,
    NoInvestNoPay,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::PayDividend => "pay_dividend",
            Regime::InvestToBoundary => "invest_to_boundary",
            Regime::InvestUnconstrained => "invest_unconstrained",
            Regime::NoInvestPay => "no_invest_pay",
            Regime::NoInvestNoPay => "no_invest_no_pay",
        }
    }
}

/// Optimum of the platform's problem for one induced sharing level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSolution {
    pub level: SharingLevel,
    pub feasible: bool,
    pub decision: Option<PlatformDecision>,
    pub regime: Option<Regime>,
    pub platform_utility: Option<f64>,
    pub user_utility: Option<f64>,
    /// `L` sits within [`BOUNDARY_REL_TOL`] of one of the regime thresholds.
    pub on_boundary: bool,
}

impl CaseSolution {
    fn infeasible(level: SharingLevel) -> Self {
        CaseSolution {
            level,
            feasible: false,
            decision: None,
            regime: None,
            platform_utility: None,
            user_utility: None,
            on_boundary: false,
        }
    }

    fn build(
        params: &GameParams,
        model: &BreachModel,
        level: SharingLevel,
        investment: f64,
        dividend: f64,
        regime: Regime,
    ) -> Self {
        let dividend = if dividend > 0.0 { dividend } else { 0.0 };
        let decision = match level {
            SharingLevel::High => PlatformDecision {
                investment,
                p0: 0.0,
                p1: dividend,
            },
            SharingLevel::Low => PlatformDecision {
                investment,
                p0: dividend,
                p1: 0.0,
            },
        };
        CaseSolution {
            level,
            feasible: true,
            decision: Some(decision),
            regime: Some(regime),
            platform_utility: Some(platform_utility(params, model, &decision, level)),
            user_utility: Some(user_utility(params, model, &decision, level)),
            on_boundary: false,
        }
    }

    /// The reduced cost `B(I) F + I + k p`, i.e. everything the platform pays.
    pub fn cost(&self, params: &GameParams) -> Option<f64> {
        self.platform_utility.map(|u| {
            let revenue = match self.level {
                SharingLevel::High => params.revenue_high,
                SharingLevel::Low => params.revenue_low,
            };
            revenue - params.service_cost - u
        })
    }
}

/// Platform-best of the two case solutions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub chosen: CaseSolution,
    pub case1: CaseSolution,
    pub case2: CaseSolution,
    /// Both cases reached the same platform utility; `High` was taken.
    pub tie_broken: bool,
    /// The chosen platform utility is negative.
    pub negative_utility: bool,
    pub candidates: CandidateInvestments,
}

impl Equilibrium {
    pub fn decision(&self) -> PlatformDecision {
        self.chosen.decision.expect("chosen case is feasible")
    }

    pub fn platform_utility(&self) -> f64 {
        self.chosen
            .platform_utility
            .expect("chosen case is feasible")
    }

    pub fn case(&self, level: SharingLevel) -> &CaseSolution {
        match level {
            SharingLevel::High => &self.case1,
            SharingLevel::Low => &self.case2,
        }
    }
}

/// Dividend multipliers and cost coefficients of one sharing level.
#[derive(Clone, Copy, Debug)]
struct LevelShape {
    upper_multiplier: f64,
    lower_multiplier: f64,
    upper_coefficient: f64,
    lower_coefficient: f64,
}

fn level_shape(params: &GameParams, level: SharingLevel) -> LevelShape {
    let (up, down) = match level {
        SharingLevel::High => (1.0, 0.0),
        SharingLevel::Low => (params.alpha, params.alpha - 1.0),
    };
    let lk = params.user_loss * params.users_f64();
    LevelShape {
        upper_multiplier: up,
        lower_multiplier: down,
        upper_coefficient: params.platform_loss + up * lk,
        lower_coefficient: params.platform_loss + down * lk,
    }
}

impl LevelShape {
    fn multiplier(&self, side: ValuationSide) -> f64 {
        match side {
            ValuationSide::NonNegative => self.upper_multiplier,
            ValuationSide::NonPositive => self.lower_multiplier,
        }
    }

    fn coefficient(&self, side: ValuationSide) -> f64 {
        match side {
            ValuationSide::NonNegative => self.upper_coefficient,
            ValuationSide::NonPositive => self.lower_coefficient,
        }
    }
}

/// Minimizer of `B(I) c + I` over `I >= 0` when it is interior or at zero.
///
/// `None` when the cost is increasing on all of `[0, inf)`, including every
/// `c <= 0`.
fn stationary_investment(model: &BreachModel, coefficient: f64) -> Option<f64> {
    if coefficient <= 0.0 {
        return None;
    }
    let slope = -1.0 / coefficient;
    if !slope.is_finite() {
        return None;
    }
    model.inverse_breach_slope(slope).ok().flatten()
}

/// `I2`: where the effective valuation crosses zero. Only defined for `L > 0`
/// and `V < W`; with `L = 0` the sign of `v` is the sign of `V - W`.
fn boundary_investment(params: &GameParams, model: &BreachModel) -> Option<f64> {
    let net = params.net_valuation();
    if params.user_loss > 0.0 && net < 0.0 {
        model.inverse_breach(-net / params.user_loss).ok().flatten()
    } else {
        None
    }
}

pub fn candidate_investments(params: &GameParams, model: &BreachModel) -> CandidateInvestments {
    let high = level_shape(params, SharingLevel::High);
    let low = level_shape(params, SharingLevel::Low);
    CandidateInvestments {
        i1: stationary_investment(model, high.upper_coefficient),
        i2: boundary_investment(params, model),
        i3: stationary_investment(model, high.lower_coefficient),
        i4: stationary_investment(model, low.upper_coefficient),
        i5: stationary_investment(model, low.lower_coefficient),
    }
}

/// The reduced one-variable cost of `level` on `side`:
/// `B(I) (F + m L k) + I + m (V - W) k`.
pub fn reduced_objective(
    params: &GameParams,
    model: &BreachModel,
    level: SharingLevel,
    side: ValuationSide,
    investment: f64,
) -> f64 {
    let shape = level_shape(params, level);
    model.prob(investment) * shape.coefficient(side)
        + investment
        + shape.multiplier(side) * params.net_valuation() * params.users_f64()
}

/// Optimum of one sub-case: the platform restricted to one side of the
/// valuation constraint.
pub fn solve_subcase(
    params: &GameParams,
    model: &BreachModel,
    level: SharingLevel,
    side: ValuationSide,
) -> CaseSolution {
    let shape = level_shape(params, level);
    let net = params.net_valuation();
    let loss = params.user_loss;
    let stationary = stationary_investment(model, shape.coefficient(side));
    let multiplier = shape.multiplier(side);
    let eps = tol(net);

    let pick = match side {
        ValuationSide::NonNegative => {
            if net >= 0.0 {
                Some(match stationary {
                    Some(i) => (i, Regime::PayDividend),
                    None => (0.0, Regime::NoInvestPay),
                })
            } else {
                match stationary {
                    Some(i) if model.prob(i) * loss >= -net - eps => Some((i, Regime::PayDividend)),
                    Some(_) => {
                        boundary_investment(params, model).map(|i2| (i2, Regime::InvestToBoundary))
                    }
                    None if model.beta() * loss >= -net - eps => Some((0.0, Regime::NoInvestPay)),
                    None => None,
                }
            }
        }
        ValuationSide::NonPositive => {
            if net > 0.0 {
                None
            } else {
                let hold = |i: f64| -net >= model.prob(i) * loss - eps;
                match stationary {
                    Some(i) if hold(i) => Some((i, Regime::InvestUnconstrained)),
                    None if hold(0.0) => Some((0.0, Regime::NoInvestNoPay)),
                    _ => {
                        boundary_investment(params, model).map(|i2| (i2, Regime::InvestToBoundary))
                    }
                }
            }
        }
    };

    match pick {
        None => CaseSolution::infeasible(level),
        Some((investment, regime)) => {
            let dividend = if regime == Regime::InvestToBoundary {
                0.0
            } else {
                multiplier * effective_valuation(params, model, investment)
            };
            CaseSolution::build(params, model, level, investment, dividend, regime)
        }
    }
}

/// Case 1, upper side: users paid `p1 = v(I)`.
pub fn solve_case1_pay(params: &GameParams, model: &BreachModel) -> CaseSolution {
    solve_subcase(
        params,
        model,
        SharingLevel::High,
        ValuationSide::NonNegative,
    )
}

/// Case 1, lower side: `p1 = 0` while `v(I) <= 0`.
pub fn solve_case1_nopay(params: &GameParams, model: &BreachModel) -> CaseSolution {
    solve_subcase(
        params,
        model,
        SharingLevel::High,
        ValuationSide::NonPositive,
    )
}

/// Case 2, upper side: `p0 = alpha v(I)`.
pub fn solve_case2_pay(params: &GameParams, model: &BreachModel) -> CaseSolution {
    solve_subcase(params, model, SharingLevel::Low, ValuationSide::NonNegative)
}

/// Case 2, lower side: `p0 = (alpha - 1) v(I)`, the payment that keeps users
/// from switching to the high level.
pub fn solve_case2_compensate(params: &GameParams, model: &BreachModel) -> CaseSolution {
    solve_subcase(params, model, SharingLevel::Low, ValuationSide::NonPositive)
}

/// Thresholds on `L` that separate the regimes of one level.
///
/// Defined only when `V < W`. `upper` is `-(V - W) / B(I_up)` when the upper
/// stationary point exists; `lower` is `-(V - W) / B(I_down)`, or
/// `-(V - W) / B(0)` when the lower stationary point does not exist.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub upper: Option<f64>,
    pub lower: Option<f64>,
}

pub fn regime_thresholds(
    params: &GameParams,
    model: &BreachModel,
    level: SharingLevel,
) -> Thresholds {
    let net = params.net_valuation();
    if net >= 0.0 {
        return Thresholds::default();
    }
    let shape = level_shape(params, level);
    let upper = stationary_investment(model, shape.upper_coefficient).map(|i| -net / model.prob(i));
    let lower = match stationary_investment(model, shape.lower_coefficient) {
        Some(i) => -net / model.prob(i),
        None => -net / model.beta(),
    };
    Thresholds {
        upper,
        lower: Some(lower),
    }
}

/// Decision given by the regime-table formula for `regime`, or `None` when the
/// investment it names does not exist. Dividends are returned unclamped.
pub fn regime_formula(
    params: &GameParams,
    model: &BreachModel,
    level: SharingLevel,
    regime: Regime,
) -> Option<PlatformDecision> {
    let shape = level_shape(params, level);
    let (investment, dividend) = match regime {
        Regime::PayDividend => {
            let i = stationary_investment(model, shape.upper_coefficient)?;
            (
                i,
                shape.upper_multiplier * effective_valuation(params, model, i),
            )
        }
        Regime::InvestToBoundary => (boundary_investment(params, model)?, 0.0),
        Regime::InvestUnconstrained => {
            let i = stationary_investment(model, shape.lower_coefficient)?;
            (
                i,
                shape.lower_multiplier * effective_valuation(params, model, i),
            )
        }
        Regime::NoInvestPay => (
            0.0,
            shape.upper_multiplier * effective_valuation(params, model, 0.0),
        ),
        Regime::NoInvestNoPay => (
            0.0,
            shape.lower_multiplier * effective_valuation(params, model, 0.0),
        ),
    };
    Some(match level {
        SharingLevel::High => PlatformDecision {
            investment,
            p0: 0.0,
            p1: dividend,
        },
        SharingLevel::Low => PlatformDecision {
            investment,
            p0: dividend,
            p1: 0.0,
        },
    })
}

/// Optimum for the case where every user shares at `level`, read off the
/// regime table.
///
/// Boundary values of `L` (within [`crate::game::MONEY_TOL`]) take the regime
/// of the lower-`L` side. In debug builds the result is checked against the
/// better of the two sub-case solutions.
pub fn solve_case(params: &GameParams, model: &BreachModel, level: SharingLevel) -> CaseSolution {
    let shape = level_shape(params, level);
    let net = params.net_valuation();
    let loss = params.user_loss;
    let up = stationary_investment(model, shape.upper_coefficient);
    let down = stationary_investment(model, shape.lower_coefficient);

    let (investment, regime, on_boundary) = if net >= 0.0 {
        match up {
            Some(i) => (i, Regime::PayDividend, false),
            None => (0.0, Regime::NoInvestPay, false),
        }
    } else {
        let at_zero = -net / model.beta();
        let above = |threshold: f64| loss > threshold + tol(threshold);
        let near =
            |threshold: f64| (loss - threshold).abs() <= BOUNDARY_REL_TOL * threshold.max(1.0);
        let to_boundary = || {
            let i2 = boundary_investment(params, model);
            debug_assert!(i2.is_some(), "I2 must exist strictly between thresholds");
            i2.unwrap_or(0.0)
        };
        match (up, down) {
            (Some(iu), Some(id)) => {
                let t_up = -net / model.prob(iu);
                let t_down = -net / model.prob(id);
                let boundary = near(t_up) || near(t_down);
                if above(t_up) {
                    (iu, Regime::PayDividend, boundary)
                } else if above(t_down) {
                    (to_boundary(), Regime::InvestToBoundary, boundary)
                } else {
                    (id, Regime::InvestUnconstrained, boundary)
                }
            }
            (Some(iu), None) => {
                let t_up = -net / model.prob(iu);
                let boundary = near(t_up) || near(at_zero);
                if above(t_up) {
                    (iu, Regime::PayDividend, boundary)
                } else if above(at_zero) {
                    (to_boundary(), Regime::InvestToBoundary, boundary)
                } else {
                    (0.0, Regime::NoInvestNoPay, boundary)
                }
            }
            // The lower coefficient never exceeds the upper one, so a lower
            // stationary point without an upper one cannot occur.
            (None, _) => {
                let boundary = near(at_zero);
                if above(at_zero) {
                    (0.0, Regime::NoInvestPay, boundary)
                } else {
                    (0.0, Regime::NoInvestNoPay, boundary)
                }
            }
        }
    };

    let dividend = match regime {
        Regime::InvestToBoundary => 0.0,
        Regime::PayDividend | Regime::NoInvestPay => {
            shape.upper_multiplier * effective_valuation(params, model, investment)
        }
        Regime::InvestUnconstrained | Regime::NoInvestNoPay => {
            shape.lower_multiplier * effective_valuation(params, model, investment)
        }
    };
    let mut solution = CaseSolution::build(params, model, level, investment, dividend, regime);
    solution.on_boundary = on_boundary;

    #[cfg(debug_assertions)]
    check_against_subcases(params, model, &solution);

    solution
}

#[cfg(debug_assertions)]
fn check_against_subcases(params: &GameParams, model: &BreachModel, solution: &CaseSolution) {
    let best = [ValuationSide::NonNegative, ValuationSide::NonPositive]
        .into_iter()
        .filter_map(|side| solve_subcase(params, model, solution.level, side).platform_utility)
        .fold(f64::NEG_INFINITY, f64::max);
    let got = solution
        .platform_utility
        .expect("case solutions are always feasible");
    let scale = 1e-9 * got.abs().max(best.abs()).max(1.0);
    debug_assert!(
        (got - best).abs() <= scale,
        "regime table ({got}) disagrees with best sub-case ({best}) for {:?}",
        solution.level
    );
    if solution.level == SharingLevel::High {
        for check in dominance_checks(params, model) {
            debug_assert!(
                check.holds(1e-9),
                "dominance inequality violated: {check:?}"
            );
        }
    }
}

pub fn solve_case1(params: &GameParams, model: &BreachModel) -> CaseSolution {
    solve_case(params, model, SharingLevel::High)
}

pub fn solve_case2(params: &GameParams, model: &BreachModel) -> CaseSolution {
    solve_case(params, model, SharingLevel::Low)
}

/// Whether `solution`'s level is what users actually pick at its decision
/// (ties broken toward the platform) and they participate.
pub fn induces_own_level(
    params: &GameParams,
    model: &BreachModel,
    solution: &CaseSolution,
) -> bool {
    let Some(decision) = solution.decision else {
        return false;
    };
    let response = user_best_response(params, model, &decision);
    response.participates
        && response.resolve_for_platform(params, model, &decision) == solution.level
}

/// Solves both cases and keeps the one with the larger platform utility.
/// Exact ties go to `High` and set `tie_broken`.
pub fn solve_equilibrium(params: &GameParams, model: &BreachModel) -> Equilibrium {
    let case1 = solve_case1(params, model);
    let case2 = solve_case2(params, model);
    let u1 = case1.platform_utility.unwrap_or(f64::NEG_INFINITY);
    let u2 = case2.platform_utility.unwrap_or(f64::NEG_INFINITY);
    let tie_broken =
        case1.feasible && case2.feasible && (u1 - u2).abs() <= tol(u1.abs().max(u2.abs()));
    let chosen = if tie_broken || u1 > u2 { case1 } else { case2 };
    debug_assert!(
        induces_own_level(params, model, &chosen),
        "equilibrium decision does not induce its level: {chosen:?}"
    );
    Equilibrium {
        chosen,
        case1,
        case2,
        tie_broken,
        negative_utility: chosen.platform_utility.is_some_and(|u| u < 0.0),
        candidates: candidate_investments(params, model),
    }
}

/// Which cross-sub-case comparison a [`DominanceCheck`] records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    /// Paying at `I1` beats not paying at `I2` once `L >= -(V-W)/B(I1)`.
    PayAtI1OverBoundary,
    /// Not paying at `I3` beats `I2` once `-(V-W)/B(I0) <= L <= -(V-W)/B(I3)`.
    UnconstrainedI3OverBoundary,
    /// Paying at `I = 0` beats `I2` when neither `I1` nor `I3` exists.
    PayAtZeroOverBoundary,
}

/// A cost comparison `boundary_cost >= alternative_cost` between the two
/// high-level sub-cases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub kind: Dominance,
    pub boundary_cost: f64,
    pub alternative_cost: f64,
}

impl DominanceCheck {
    pub fn holds(&self, rel_tol: f64) -> bool {
        let scale = self
            .boundary_cost
            .abs()
            .max(self.alternative_cost.abs())
            .max(1.0);
        self.boundary_cost >= self.alternative_cost - rel_tol * scale
    }
}

/// The high-level dominance comparisons whose hypotheses hold for these
/// parameters. Empty when `V >= W` or `L = 0`.
pub fn dominance_checks(params: &GameParams, model: &BreachModel) -> Vec<DominanceCheck> {
    let net = params.net_valuation();
    let loss = params.user_loss;
    let mut checks = Vec::new();
    let Some(i2) = boundary_investment(params, model) else {
        return checks;
    };
    let k = params.users_f64();
    let f0 = params.platform_loss;
    let f1 = f0 + loss * k;
    let boundary_cost = model.prob(i2) * f0 + i2;
    let c = candidate_investments(params, model);
    let at_zero = -net / model.beta();

    if let Some(i1) = c.i1 {
        if loss >= -net / model.prob(i1) {
            checks.push(DominanceCheck {
                kind: Dominance::PayAtI1OverBoundary,
                boundary_cost,
                alternative_cost: model.prob(i1) * f1 + i1 + net * k,
            });
        }
    }
    if let Some(i3) = c.i3 {
        if loss <= -net / model.prob(i3) && loss >= at_zero {
            checks.push(DominanceCheck {
                kind: Dominance::UnconstrainedI3OverBoundary,
                boundary_cost,
                alternative_cost: model.prob(i3) * f0 + i3,
            });
        }
    }
    if c.i1.is_none() && c.i3.is_none() && loss >= at_zero {
        checks.push(DominanceCheck {
            kind: Dominance::PayAtZeroOverBoundary,
            boundary_cost,
            alternative_cost: model.beta() * f1 + net * k,
        });
    }
    checks
}
