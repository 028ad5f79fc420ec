//! Scenario configs, single solves, parameter sweeps and seeded oracle batches.
//!
//! Everything here produces data (CSV rows or JSON-serializable reports);
//! the `dividend` binary only handles argument parsing and file output.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::breach::{BreachFamily, BreachModel};
use crate::equilibrium::{regime_thresholds, solve_equilibrium, Equilibrium, Regime, Thresholds};
use crate::error::Error;
use crate::game::{effective_valuation, GameParams, SharingLevel, MAX_MAGNITUDE};
use crate::oracle::{verify, DecisionDeltas, OracleConfig, CEILING_FRACTION};

/// Parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweptParameter {
    L,
    F,
    V,
    W,
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "k")]
    K,
    #[serde(rename = "beta")]
    Beta,
    #[serde(rename = "rate")]
    Rate,
}

impl SweptParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweptParameter::L => "L",
            SweptParameter::F => "F",
            SweptParameter::V => "V",
            SweptParameter::W => "W",
            SweptParameter::Alpha => "alpha",
            SweptParameter::K => "k",
            SweptParameter::Beta => "beta",
            SweptParameter::Rate => "rate",
        }
    }

    /// Copies of `params` and `model` with this parameter set to `value`,
    /// validated. `k` is rounded to the nearest integer.
    pub fn apply(
        &self,
        params: &GameParams,
        model: &BreachModel,
        value: f64,
    ) -> Result<(GameParams, BreachModel), Error> {
        let mut p = *params;
        let mut m = *model;
        match self {
            SweptParameter::L => p.user_loss = value,
            SweptParameter::F => p.platform_loss = value,
            SweptParameter::V => p.data_value = value,
            SweptParameter::W => p.service_value = value,
            SweptParameter::Alpha => p.alpha = value,
            SweptParameter::K => {
                let rounded = value.round();
                if !(rounded.is_finite() && (1.0..=MAX_MAGNITUDE).contains(&rounded)) {
                    return Err(Error::invalid(
                        "params.k",
                        format!("must be a positive integer, got {value}"),
                    ));
                }
                p.users = rounded as u32;
            }
            SweptParameter::Beta => {
                m = BreachModel::new(m.family(), value, m.rate(), m.scale())
                    .map_err(|e| e.scoped("model"))?
            }
            SweptParameter::Rate => {
                m = BreachModel::new(m.family(), m.beta(), value, m.scale())
                    .map_err(|e| e.scoped("model"))?
            }
        }
        p.validate().map_err(|e| e.scoped("params"))?;
        Ok((p, m))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweptParameter,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl SweepSpec {
    /// Evenly spaced values from `start` to `stop` inclusive.
    pub fn values(&self) -> Vec<f64> {
        let n = self.steps;
        (0..n)
            .map(|j| {
                if j + 1 == n {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * j as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSpec {
    family: BreachFamily,
    beta: f64,
    rate: f64,
    #[serde(default)]
    scale: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    params: GameParams,
    model: ModelSpec,
    #[serde(default)]
    oracle: Option<OracleConfig>,
    #[serde(default)]
    sweep: Option<SweepSpec>,
}

/// A validated scenario document.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub params: GameParams,
    pub model: BreachModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl ScenarioConfig {
    pub fn oracle_config(&self) -> OracleConfig {
        self.oracle.unwrap_or_default()
    }
}

/// Parses and validates a JSON scenario. Errors name the offending field
/// path, e.g. `params.alpha`.
pub fn parse_config(document: &str) -> Result<ScenarioConfig, Error> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| Error::Malformed {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;

    raw.params.validate().map_err(|e| e.scoped("params"))?;
    let spec = raw.model;
    let model = BreachModel::new(spec.family, spec.beta, spec.rate, spec.scale.unwrap_or(1.0))
        .map_err(|e| e.scoped("model"))?;
    if let Some(oracle) = &raw.oracle {
        oracle.validate().map_err(|e| e.scoped("oracle"))?;
    }
    if let Some(sweep) = &raw.sweep {
        validate_sweep(sweep, &raw.params, &model)?;
    }
    Ok(ScenarioConfig {
        params: raw.params,
        model,
        oracle: raw.oracle,
        sweep: raw.sweep,
    })
}

fn validate_sweep(
    sweep: &SweepSpec,
    params: &GameParams,
    model: &BreachModel,
) -> Result<(), Error> {
    for (name, value) in [("start", sweep.start), ("stop", sweep.stop)] {
        if !value.is_finite() {
            return Err(Error::invalid(
                format!("sweep.{name}"),
                format!("must be finite, got {value}"),
            ));
        }
    }
    if sweep.steps < 2 {
        return Err(Error::invalid(
            "sweep.steps",
            format!("must be at least 2, got {}", sweep.steps),
        ));
    }
    let values = sweep.values();
    let last = values.len() - 1;
    for (j, value) in values.into_iter().enumerate() {
        if let Err(err) = sweep.parameter.apply(params, model, value) {
            let path = match j {
                0 => "sweep.start",
                j if j == last => "sweep.stop",
                _ => "sweep",
            };
            return Err(Error::invalid(
                path,
                format!(
                    "{}={value} leaves the validity domain ({err})",
                    sweep.parameter.name()
                ),
            ));
        }
    }
    Ok(())
}

/// Result of `solve` on one scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub params: GameParams,
    pub model: BreachModel,
    pub equilibrium: Equilibrium,
    pub thresholds_high: Thresholds,
    pub thresholds_low: Thresholds,
    pub effective_valuation: f64,
    pub warnings: Vec<String>,
}

pub fn run_solve(cfg: &ScenarioConfig) -> SolveReport {
    let equilibrium = solve_equilibrium(&cfg.params, &cfg.model);
    let decision = equilibrium.decision();
    let mut warnings = Vec::new();
    if equilibrium.negative_utility {
        warnings.push(format!(
            "platform utility {} is negative; operating at a loss",
            equilibrium.platform_utility()
        ));
    }
    let ceiling = cfg.oracle_config().i_max;
    if decision.investment >= CEILING_FRACTION * ceiling {
        warnings.push(format!(
            "optimal investment {} is at or beyond the oracle ceiling {ceiling}",
            decision.investment
        ));
    }
    SolveReport {
        params: cfg.params,
        model: cfg.model,
        equilibrium,
        thresholds_high: regime_thresholds(&cfg.params, &cfg.model, SharingLevel::High),
        thresholds_low: regime_thresholds(&cfg.params, &cfg.model, SharingLevel::Low),
        effective_valuation: effective_valuation(&cfg.params, &cfg.model, decision.investment),
        warnings,
    }
}

/// One step of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub level: SharingLevel,
    pub regime: Regime,
    pub investment: f64,
    pub p0: f64,
    pub p1: f64,
    pub platform_utility: f64,
    pub user_utility: f64,
    pub effective_valuation: f64,
    pub threshold_upper: Option<f64>,
    pub threshold_lower: Option<f64>,
    /// Level or regime differs from the previous row.
    pub transition: bool,
}

pub const CSV_HEADER: [&str; 12] = [
    "value",
    "level",
    "regime",
    "investment",
    "p0",
    "p1",
    "platform_utility",
    "user_utility",
    "effective_valuation",
    "threshold_upper",
    "threshold_lower",
    "transition",
];

fn sweep_row(params: &GameParams, model: &BreachModel, value: f64) -> SweepRow {
    let eq = solve_equilibrium(params, model);
    let chosen = eq.chosen;
    let d = eq.decision();
    let thresholds = regime_thresholds(params, model, chosen.level);
    SweepRow {
        value,
        level: chosen.level,
        regime: chosen.regime.expect("chosen case is feasible"),
        investment: d.investment,
        p0: d.p0,
        p1: d.p1,
        platform_utility: eq.platform_utility(),
        user_utility: chosen.user_utility.expect("chosen case is feasible"),
        effective_valuation: effective_valuation(params, model, d.investment),
        threshold_upper: thresholds.upper,
        threshold_lower: thresholds.lower,
        transition: false,
    }
}

/// Solves the equilibrium at every sweep step. Steps run in parallel; rows
/// come back in sweep order.
pub fn run_sweep(cfg: &ScenarioConfig) -> Result<Vec<SweepRow>, Error> {
    let sweep = cfg.sweep.ok_or(Error::MissingSweep)?;
    let values = sweep.values();
    let mut rows = values
        .par_iter()
        .map(|&value| {
            let (p, m) = sweep
                .parameter
                .apply(&cfg.params, &cfg.model, value)
                .map_err(|e| Error::SweepStep {
                    parameter: sweep.parameter.name(),
                    value,
                    source: Box::new(e),
                })?;
            Ok(sweep_row(&p, &m, value))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    for j in 1..rows.len() {
        let (prev, cur) = (rows[j - 1], rows[j]);
        rows[j].transition = prev.level != cur.level || prev.regime != cur.regime;
    }
    Ok(rows)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes rows as CSV with a fixed header, `\n` line endings and shortest
/// round-trip decimals.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.level.as_str().to_string(),
            r.regime.as_str().to_string(),
            r.investment.to_string(),
            r.p0.to_string(),
            r.p1.to_string(),
            r.platform_utility.to_string(),
            r.user_utility.to_string(),
            r.effective_valuation.to_string(),
            fmt_opt(r.threshold_upper),
            fmt_opt(r.threshold_lower),
            r.transition.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sampling ranges for random verification instances. Ranges marked
/// log-uniform are sampled uniformly in `ln x`.
pub mod ranges {
    pub const BETA: (f64, f64) = (0.05, 1.0);
    /// Exponential decay rate.
    pub const EXP_RATE: (f64, f64) = (0.005, 0.5);
    /// Power-law exponent.
    pub const POW_EXPONENT: (f64, f64) = (0.5, 4.0);
    pub const POW_SCALE: (f64, f64) = (1.0, 100.0);
    pub const USERS: (f64, f64) = (1.0, 100.0);
    pub const PLATFORM_LOSS: (f64, f64) = (1.0, 1e4);
    pub const USER_LOSS: (f64, f64) = (0.1, 500.0);
    pub const VALUATION: (f64, f64) = (0.1, 500.0);
    pub const SERVICE_COST: (f64, f64) = (0.1, 100.0);
    pub const REVENUE_HIGH: (f64, f64) = (100.0, 1e5);
    /// `revenue_low / revenue_high`, uniform.
    pub const REVENUE_RATIO: (f64, f64) = (0.3, 1.2);
    /// Uniform.
    pub const ALPHA: (f64, f64) = (0.05, 0.95);
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.gen_range(lo.ln()..=hi.ln()).exp()
}

/// Draws one random instance. Even indices use the exponential family, odd
/// indices the power law.
pub fn random_instance<R: Rng>(rng: &mut R, index: usize) -> (GameParams, BreachModel) {
    let beta = log_uniform(rng, ranges::BETA);
    let model = if index.is_multiple_of(2) {
        BreachModel::exponential(beta, log_uniform(rng, ranges::EXP_RATE))
    } else {
        let exponent = log_uniform(rng, ranges::POW_EXPONENT);
        BreachModel::power_law(beta, exponent, log_uniform(rng, ranges::POW_SCALE))
    }
    .expect("sampling ranges are valid");
    let revenue_high = log_uniform(rng, ranges::REVENUE_HIGH);
    let params = GameParams {
        users: log_uniform(rng, ranges::USERS).round().max(1.0) as u32,
        service_cost: log_uniform(rng, ranges::SERVICE_COST),
        platform_loss: log_uniform(rng, ranges::PLATFORM_LOSS),
        data_value: log_uniform(rng, ranges::VALUATION),
        service_value: log_uniform(rng, ranges::VALUATION),
        user_loss: log_uniform(rng, ranges::USER_LOSS),
        alpha: rng.gen_range(ranges::ALPHA.0..=ranges::ALPHA.1),
        revenue_high,
        revenue_low: revenue_high
            * rng.gen_range(ranges::REVENUE_RATIO.0..=ranges::REVENUE_RATIO.1),
    };
    (params, model)
}

/// `count` seeded random instances.
pub fn random_instances(seed: u64, count: usize) -> Vec<(GameParams, BreachModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| random_instance(&mut rng, i)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceResult {
    pub index: usize,
    pub family: BreachFamily,
    pub params: GameParams,
    pub model: BreachModel,
    pub pass: bool,
    pub level: SharingLevel,
    pub closed_form_utility: f64,
    pub oracle_utility: f64,
    pub utility_delta: f64,
    pub deltas: DecisionDeltas,
    pub annotations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifySummary {
    pub seed: u64,
    pub oracle: OracleConfig,
    /// The scenario's own instance.
    pub scenario: InstanceResult,
    pub instances: usize,
    pub passed: usize,
    pub failed: usize,
    pub pass_rate: f64,
    pub results: Vec<InstanceResult>,
}

impl VerifySummary {
    pub fn all_passed(&self) -> bool {
        self.failed == 0 && self.scenario.pass
    }
}

fn check_instance(
    index: usize,
    params: &GameParams,
    model: &BreachModel,
    cfg: &OracleConfig,
) -> InstanceResult {
    let report = verify(params, model, cfg);
    InstanceResult {
        index,
        family: model.family(),
        params: *params,
        model: *model,
        pass: report.pass,
        level: report.equilibrium.chosen.level,
        closed_form_utility: report.equilibrium.platform_utility(),
        oracle_utility: report.oracle.platform_utility,
        utility_delta: report.utility_delta,
        deltas: report.deltas,
        annotations: report.annotations,
    }
}

/// Verifies the scenario instance plus `count` seeded random instances
/// against the bilevel oracle. Instances run in parallel; results keep
/// their index order, so the summary is a pure function of its inputs.
pub fn run_verify(cfg: &ScenarioConfig, count: usize, seed: u64) -> VerifySummary {
    let oracle = cfg.oracle_config();
    let scenario = check_instance(0, &cfg.params, &cfg.model, &oracle);
    let instances = random_instances(seed, count);
    let results: Vec<InstanceResult> = instances
        .par_iter()
        .enumerate()
        .map(|(i, (p, m))| check_instance(i, p, m, &oracle))
        .collect();
    let passed = results.iter().filter(|r| r.pass).count();
    VerifySummary {
        seed,
        oracle,
        scenario,
        instances: count,
        passed,
        failed: count - passed,
        pass_rate: if count == 0 {
            1.0
        } else {
            passed as f64 / count as f64
        },
        results,
    }
}
