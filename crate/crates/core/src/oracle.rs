//! Independent numerical checks for the closed-form solver.
//!
//! Two tools live here. [`minimize_reduced`] minimizes a one-variable convex
//! cost by golden-section search on the feasible interval. The bilevel
//! search [`brute_force_equilibrium`] enumerates platform decisions on a grid,
//! lets users best-respond exactly and keeps the best participating point.
//! Neither touches the regime tables in [`crate::equilibrium`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::breach::BreachModel;
use crate::equilibrium::{solve_equilibrium, CaseSolution, Equilibrium};
use crate::error::Error;
use crate::game::{
    effective_valuation, platform_utility, user_best_response, GameParams, PlatformDecision,
    SharingLevel,
};

/// Fraction of `i_max` above which an optimum is reported as near the ceiling.
pub const CEILING_FRACTION: f64 = 0.99;

/// Relative utility change below which a decision variable counts as flat.
pub const FLAT_REL_TOL: f64 = 1e-12;

/// Size of the `+-` move used to probe whether utility depends on a decision
/// variable. Fixed, so tightening `tol_decision` never turns the probe off.
pub const FLAT_PROBE_STEP: f64 = 1e-2;

/// Extra evenly spaced price levels tried at each investment on top of the
/// analytic candidates.
const PRICE_GRID: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Search ceiling for the investment.
    pub i_max: f64,
    /// Points per axis of the investment grid.
    pub grid_points: usize,
    /// Local refinement passes around the best grid point of each level.
    pub refine_rounds: usize,
    /// Relative tolerance on platform utility.
    pub tol_objective: f64,
    /// Absolute tolerance on `I`, `p0` and `p1`.
    pub tol_decision: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            i_max: 1e5,
            grid_points: 400,
            refine_rounds: 3,
            tol_objective: 1e-3,
            tol_decision: 1e-2,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), Error> {
        for (name, value) in [
            ("i_max", self.i_max),
            ("tol_objective", self.tol_objective),
            ("tol_decision", self.tol_decision),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(
                    name,
                    format!("must be positive, got {value}"),
                ));
            }
        }
        if self.grid_points < 16 {
            return Err(Error::invalid(
                "grid_points",
                format!("must be at least 16, got {}", self.grid_points),
            ));
        }
        if self.refine_rounds == 0 {
            return Err(Error::invalid("refine_rounds", "must be positive"));
        }
        Ok(())
    }
}

/// Direction of the sign constraint on `v(I) = net + B(I) loss`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    AtLeastZero,
    AtMostZero,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValuationConstraint {
    /// `V - W`
    pub net: f64,
    /// `L`
    pub loss: f64,
    pub sense: Sense,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedMinimum {
    pub investment: f64,
    pub value: f64,
}

/// Interval of `[0, i_max]` on which the constraint holds, or `None`.
///
/// `v` is monotone in `I`, so the feasible set is an interval whose inner end
/// is the zero of `v` found with [`BreachModel::inverse_breach`].
pub fn feasible_interval(
    model: &BreachModel,
    constraint: Option<&ValuationConstraint>,
    i_max: f64,
) -> Option<(f64, f64)> {
    let Some(c) = constraint else {
        return Some((0.0, i_max));
    };
    let valuation = |i: f64| c.net + model.prob(i) * c.loss;
    match c.sense {
        Sense::AtLeastZero => {
            if valuation(i_max) >= 0.0 {
                return Some((0.0, i_max));
            }
            if valuation(0.0) < 0.0 {
                return None;
            }
            let zero = model.inverse_breach(-c.net / c.loss).ok().flatten()?;
            Some((0.0, zero.min(i_max)))
        }
        Sense::AtMostZero => {
            if valuation(0.0) <= 0.0 {
                return Some((0.0, i_max));
            }
            if valuation(i_max) > 0.0 {
                return None;
            }
            let zero = model.inverse_breach(-c.net / c.loss).ok().flatten()?;
            (zero <= i_max).then_some((zero, i_max))
        }
    }
}

/// Minimizes a convex one-variable cost on the feasible part of `[0, i_max]`.
///
/// A coarse log-spaced scan brackets the minimum, then golden-section search
/// shrinks the bracket until it is narrower than `1e-12 * max(1, I)`.
/// Returns `None` when no `I` in `[0, i_max]` satisfies the constraint.
pub fn minimize_reduced<F>(
    model: &BreachModel,
    objective: F,
    constraint: Option<&ValuationConstraint>,
    i_max: f64,
) -> Option<ReducedMinimum>
where
    F: Fn(f64) -> f64,
{
    let (lo, hi) = feasible_interval(model, constraint, i_max)?;
    if hi <= lo {
        return Some(ReducedMinimum {
            investment: lo,
            value: objective(lo),
        });
    }

    // bracket
    let mut points = vec![lo];
    let span = hi - lo;
    let n = 96;
    for j in 0..=n {
        let t = 1e-9_f64.powf(1.0 - j as f64 / n as f64);
        points.push(lo + span * t);
    }
    points.push(hi);
    points.sort_by(f64::total_cmp);
    points.dedup();
    let values: Vec<f64> = points.iter().map(|&x| objective(x)).collect();
    let best = argmin(&values);
    let mut a = points[best.saturating_sub(1)];
    let mut b = points[(best + 1).min(points.len() - 1)];

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = objective(c);
    let mut fd = objective(d);
    for _ in 0..400 {
        if b - a <= 1e-12 * b.abs().max(1.0) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = objective(d);
        }
    }

    let mid = 0.5 * (a + b);
    let candidates = [(points[best], values[best]), (mid, objective(mid))];
    let (investment, value) =
        candidates
            .into_iter()
            .fold((f64::NAN, f64::INFINITY), |acc, (x, v)| {
                if v < acc.1 {
                    (x, v)
                } else {
                    acc
                }
            });
    Some(ReducedMinimum { investment, value })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Best platform decision found by the bilevel search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub decision: PlatformDecision,
    pub level: SharingLevel,
    pub platform_utility: f64,
    /// The best investment lies within 1% of the search ceiling.
    pub near_ceiling: bool,
}

#[derive(Clone, Copy, Debug)]
struct Point {
    utility: f64,
    decision: PlatformDecision,
}

impl Point {
    /// Strictly better, or equal utility at a lexicographically smaller decision.
    fn beats(&self, other: &Option<Point>) -> bool {
        match other {
            None => true,
            Some(o) => {
                if self.utility != o.utility {
                    return self.utility > o.utility;
                }
                let key = |d: &PlatformDecision| (d.investment, d.p0, d.p1);
                let (a, b) = (key(&self.decision), key(&o.decision));
                a.0.total_cmp(&b.0)
                    .then(a.1.total_cmp(&b.1))
                    .then(a.2.total_cmp(&b.2))
                    .is_lt()
            }
        }
    }
}

fn level_index(level: SharingLevel) -> usize {
    match level {
        SharingLevel::Low => 0,
        SharingLevel::High => 1,
    }
}

/// Prices worth trying at investment `I`: the incentive and participation
/// thresholds `{0, v, alpha v, (alpha - 1) v}` plus an even grid.
fn price_candidates(params: &GameParams, model: &BreachModel, investment: f64) -> Vec<f64> {
    let v = effective_valuation(params, model, investment);
    let a = params.alpha;
    let mut prices = vec![0.0, v, a * v, (a - 1.0) * v];
    let top = 2.0 * v.abs().max(1.0);
    for j in 1..=PRICE_GRID {
        prices.push(top * j as f64 / PRICE_GRID as f64);
    }
    prices.retain(|p| p.is_finite() && *p >= 0.0);
    prices.sort_by(f64::total_cmp);
    prices.dedup();
    prices
}

/// Best participating point of each level at one investment.
fn best_at(params: &GameParams, model: &BreachModel, investment: f64) -> [Option<Point>; 2] {
    let prices = price_candidates(params, model, investment);
    let mut best: [Option<Point>; 2] = [None, None];
    for &p0 in &prices {
        for &p1 in &prices {
            let decision = PlatformDecision { investment, p0, p1 };
            let response = user_best_response(params, model, &decision);
            if !response.participates {
                continue;
            }
            let level = response.resolve_for_platform(params, model, &decision);
            let point = Point {
                utility: platform_utility(params, model, &decision, level),
                decision,
            };
            let slot = &mut best[level_index(level)];
            if point.beats(slot) {
                *slot = Some(point);
            }
        }
    }
    best
}

/// Evaluates a sorted investment grid; returns per-level best with its index.
fn scan(params: &GameParams, model: &BreachModel, grid: &[f64]) -> [Option<(usize, Point)>; 2] {
    let per_point: Vec<[Option<Point>; 2]> = grid
        .par_iter()
        .map(|&i| best_at(params, model, i))
        .collect();
    let mut best: [Option<(usize, Point)>; 2] = [None, None];
    for (idx, points) in per_point.iter().enumerate() {
        for lvl in 0..2 {
            if let Some(p) = points[lvl] {
                if p.beats(&best[lvl].map(|(_, q)| q)) {
                    best[lvl] = Some((idx, p));
                }
            }
        }
    }
    best
}

fn initial_grid(cfg: &OracleConfig) -> Vec<f64> {
    let n = cfg.grid_points;
    let mut grid = Vec::with_capacity(2 * n + 1);
    grid.push(0.0);
    for j in 1..=n {
        grid.push(cfg.i_max * j as f64 / n as f64);
    }
    let floor = cfg.i_max * 1e-9;
    for j in 0..n {
        grid.push(floor * (cfg.i_max / floor).powf(j as f64 / (n - 1) as f64));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..n)
        .map(|j| a + (b - a) * j as f64 / (n - 1) as f64)
        .collect();
    out.dedup();
    out
}

/// Exhaustive search over `(I, p0, p1)` with exact user best responses.
///
/// Investments come from an even grid plus a log-spaced grid on
/// `[0, i_max]`; each level's best grid point is then refined
/// `refine_rounds` times on a finer grid spanning its two neighbors. Ties keep
/// the lexicographically smallest `(I, p0, p1)`, so the result does not
/// depend on evaluation order.
pub fn brute_force_equilibrium(
    params: &GameParams,
    model: &BreachModel,
    cfg: &OracleConfig,
) -> OracleOutcome {
    let grid = initial_grid(cfg);
    let first = scan(params, model, &grid);
    let mut finals: [Option<Point>; 2] = [None, None];

    for lvl in 0..2 {
        let Some((mut idx, mut best)) = first[lvl] else {
            continue;
        };
        let mut current = grid.clone();
        for _ in 0..cfg.refine_rounds {
            let a = current[idx.saturating_sub(1)];
            let b = current[(idx + 1).min(current.len() - 1)];
            if b <= a {
                break;
            }
            let finer = linspace(a, b, cfg.grid_points);
            let found = scan(params, model, &finer)[lvl];
            match found {
                Some((j, p)) => {
                    if p.beats(&Some(best)) {
                        best = p;
                    }
                    idx = j;
                    current = finer;
                }
                None => break,
            }
        }
        finals[lvl] = Some(best);
    }

    // (I=0, p0=0, p1=huge) always participates, so at least one level is set
    let (level, point) = match (finals[1], finals[0]) {
        (Some(h), Some(l)) => {
            if l.beats(&Some(h)) {
                (SharingLevel::Low, l)
            } else {
                (SharingLevel::High, h)
            }
        }
        (Some(h), None) => (SharingLevel::High, h),
        (None, Some(l)) => (SharingLevel::Low, l),
        (None, None) => unreachable!("price grid always contains a participating point"),
    };
    OracleOutcome {
        decision: point.decision,
        level,
        platform_utility: point.utility,
        near_ceiling: point.decision.investment >= CEILING_FRACTION * cfg.i_max,
    }
}

/// Per-variable absolute differences; `None` marks a variable skipped
/// because the platform utility does not depend on it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionDeltas {
    pub investment: Option<f64>,
    pub p0: Option<f64>,
    pub p1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub params: GameParams,
    pub model: BreachModel,
    pub equilibrium: Equilibrium,
    pub oracle: OracleOutcome,
    /// `|u_closed - u_oracle| / max(1, |u_closed|)`
    pub utility_delta: f64,
    pub deltas: DecisionDeltas,
    /// Closed-form and oracle decisions induce the same sharing level, or the
    /// two cases tie within `tol_objective`.
    pub level_consistent: bool,
    pub pass: bool,
    pub annotations: Vec<String>,
}

/// Platform utility actually realized at `decision`, or `-inf` when users
/// would not participate.
fn realized_utility(params: &GameParams, model: &BreachModel, decision: &PlatformDecision) -> f64 {
    let response = user_best_response(params, model, decision);
    if !response.participates {
        return f64::NEG_INFINITY;
    }
    let level = response.resolve_for_platform(params, model, decision);
    platform_utility(params, model, decision, level)
}

fn is_flat(
    params: &GameParams,
    model: &BreachModel,
    base: &PlatformDecision,
    step: f64,
    set: impl Fn(&mut PlatformDecision, f64),
    get: impl Fn(&PlatformDecision) -> f64,
) -> bool {
    let reference = realized_utility(params, model, base);
    let scale = FLAT_REL_TOL * reference.abs().max(1.0);
    [step, -step].into_iter().all(|s| {
        let mut moved = *base;
        set(&mut moved, (get(base) + s).max(0.0));
        let u = realized_utility(params, model, &moved);
        (u - reference).abs() <= scale
    })
}

/// Compares an arbitrary closed-form `equilibrium` with the bilevel oracle.
pub fn verify_against(
    params: &GameParams,
    model: &BreachModel,
    equilibrium: &Equilibrium,
    cfg: &OracleConfig,
) -> VerificationReport {
    let oracle = brute_force_equilibrium(params, model, cfg);
    let mut annotations = Vec::new();
    let closed = equilibrium.platform_utility();
    let scale = closed.abs().max(1.0);
    let utility_delta = (closed - oracle.platform_utility).abs() / scale;

    let chosen = equilibrium.chosen;
    let mut level_consistent = true;
    let reference: CaseSolution = if oracle.level == chosen.level {
        chosen
    } else {
        let other = *equilibrium.case(oracle.level);
        let gap = other.platform_utility.map(|u| (u - closed).abs() / scale);
        if gap.is_some_and(|g| g <= cfg.tol_objective) {
            annotations.push(format!(
                "near tie between cases; oracle chose {} level",
                oracle.level.as_str()
            ));
            other
        } else {
            level_consistent = false;
            chosen
        }
    };
    let base = reference.decision.expect("reference case is feasible");

    let step = FLAT_PROBE_STEP;
    let od = oracle.decision;
    let deltas = DecisionDeltas {
        investment: (!is_flat(
            params,
            model,
            &base,
            step,
            |d, x| d.investment = x,
            |d| d.investment,
        ))
        .then(|| (base.investment - od.investment).abs()),
        p0: (!is_flat(params, model, &base, step, |d, x| d.p0 = x, |d| d.p0))
            .then(|| (base.p0 - od.p0).abs()),
        p1: (!is_flat(params, model, &base, step, |d, x| d.p1 = x, |d| d.p1))
            .then(|| (base.p1 - od.p1).abs()),
    };

    if equilibrium.tie_broken {
        annotations.push("cases tie exactly; high level taken".to_string());
    }
    if reference.on_boundary {
        annotations.push("user loss sits on a regime boundary".to_string());
    }
    if oracle.near_ceiling {
        annotations.push("oracle optimum within 1% of the investment ceiling".to_string());
    }
    if oracle.platform_utility > closed + cfg.tol_objective * scale {
        annotations.push("oracle exceeds the closed-form utility".to_string());
    }

    let decisions_ok = [deltas.investment, deltas.p0, deltas.p1]
        .into_iter()
        .flatten()
        .all(|d| d <= cfg.tol_decision);
    let pass = level_consistent && utility_delta <= cfg.tol_objective && decisions_ok;

    VerificationReport {
        params: *params,
        model: *model,
        equilibrium: *equilibrium,
        oracle,
        utility_delta,
        deltas,
        level_consistent,
        pass,
        annotations,
    }
}

/// Solves in closed form and checks the result against the oracle.
pub fn verify(params: &GameParams, model: &BreachModel, cfg: &OracleConfig) -> VerificationReport {
    verify_against(params, model, &solve_equilibrium(params, model), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::candidate_investments;

    fn model() -> BreachModel {
        BreachModel::exponential(0.5, 0.1).unwrap()
    }

    fn params(net: f64, loss: f64) -> GameParams {
        GameParams {
            users: 10,
            service_cost: 10.0,
            platform_loss: 100.0,
            data_value: 30.0 + net,
            service_value: 30.0,
            user_loss: loss,
            alpha: 0.5,
            revenue_high: 500.0,
            revenue_low: 300.0,
        }
    }

    #[test]
    fn minimize_unconstrained_matches_stationary_point() {
        let m = model();
        let r = minimize_reduced(&m, |i| m.prob(i) * 600.0 + i, None, 1e5).unwrap();
        assert!(
            (r.investment - 10.0 * 30.0_f64.ln()).abs() < 1e-6,
            "{}",
            r.investment
        );
    }

    #[test]
    fn minimize_increasing_objective_hits_zero() {
        let r = minimize_reduced(&model(), |i| i, None, 1e5).unwrap();
        assert_eq!(r.investment, 0.0);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn minimize_constrained_lands_on_boundary() {
        let m = model();
        let c = ValuationConstraint {
            net: -10.0,
            loss: 150.0,
            sense: Sense::AtMostZero,
        };
        let r = minimize_reduced(&m, |i| m.prob(i) * 100.0 + i, Some(&c), 1e5).unwrap();
        assert!(
            (r.investment - 10.0 * 7.5_f64.ln()).abs() < 1e-9,
            "{}",
            r.investment
        );
    }

    #[test]
    fn minimize_reports_infeasible() {
        let m = model();
        let c = ValuationConstraint {
            net: -10.0,
            loss: 1.0,
            sense: Sense::AtLeastZero,
        };
        assert!(minimize_reduced(&m, |i| i, Some(&c), 1e5).is_none());
        let c = ValuationConstraint {
            net: 5.0,
            loss: 1.0,
            sense: Sense::AtMostZero,
        };
        assert!(minimize_reduced(&m, |i| i, Some(&c), 1e5).is_none());
    }

    #[test]
    fn brute_force_worked_instance() {
        let p = params(10.0, 50.0);
        let o = brute_force_equilibrium(&p, &model(), &OracleConfig::default());
        assert_eq!(o.level, SharingLevel::High);
        assert!((o.decision.investment - 34.012).abs() < 0.01, "{:?}", o);
        assert!((o.decision.p1 - 10.8333).abs() < 0.01);
        assert!((o.platform_utility - 345.988).abs() < 0.01);
        assert!(!o.near_ceiling);
    }

    #[test]
    fn brute_force_flat_instance_is_exact() {
        let p = GameParams {
            revenue_low: 500.0,
            ..params(-10.0, 0.0)
        };
        let o = brute_force_equilibrium(&p, &model(), &OracleConfig::default());
        let e = solve_equilibrium(&p, &model());
        assert!((o.platform_utility - e.platform_utility()).abs() < 1e-9);
        assert_eq!(o.decision.p0, 0.0);
        assert_eq!(o.decision.p1, 0.0);
    }

    #[test]
    fn verify_worked_instances_pass() {
        let cfg = OracleConfig::default();
        let r = verify(&params(-10.0, 50.0), &model(), &cfg);
        assert!(r.pass, "{r:?}");
        assert!(r.utility_delta < 1e-3);
        let r = verify(&params(10.0, 50.0), &model(), &cfg);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn corrupted_solution_fails() {
        let p = params(-10.0, 50.0);
        let mut e = solve_equilibrium(&p, &model());
        let mut d = e.chosen.decision.unwrap();
        d.investment += 1.0;
        e.chosen.decision = Some(d);
        let r = verify_against(&p, &model(), &e, &OracleConfig::default());
        assert!(!r.pass);
        let di = r.deltas.investment.unwrap();
        assert!((di - 1.0).abs() < 1e-2, "{di}");
    }

    #[test]
    fn boundary_instance_passes_with_annotation() {
        // L = -(V - W) / B(I3) with I3 independent of L
        let base = params(-10.0, 1.0);
        let i3 = candidate_investments(&base, &model()).i3.unwrap();
        let loss = 10.0 / model().prob(i3);
        let p = GameParams {
            user_loss: loss,
            ..base
        };
        let r = verify(&p, &model(), &OracleConfig::default());
        assert!(r.pass, "{r:?}");
        assert!(
            r.annotations.iter().any(|a| a.contains("boundary")),
            "{:?}",
            r.annotations
        );
    }

    #[test]
    fn unused_price_is_flat() {
        // High level chosen with p1 = v > 0; moving p0 by the decision
        // tolerance never changes what users pick.
        let p = params(10.0, 50.0);
        let r = verify(&p, &model(), &OracleConfig::default());
        assert_eq!(r.equilibrium.chosen.level, SharingLevel::High);
        assert!(r.deltas.p0.is_none());
        assert!(r.deltas.investment.is_some());
        assert!(r.deltas.p1.is_some());
    }

    #[test]
    fn config_validation() {
        assert!(OracleConfig::default().validate().is_ok());
        let bad = OracleConfig {
            grid_points: 8,
            ..OracleConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = OracleConfig {
            tol_decision: 0.0,
            ..OracleConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
