use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dividend_core::sweep::{write_sweep_csv, SolveReport, VerifySummary};
use dividend_core::{parse_config, run_solve, run_sweep, run_verify, ScenarioConfig};
use serde::Serialize;

/// Platform/user data-dividend equilibria: solve, sweep and verify.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario in closed form.
    Solve(Common),
    /// Solve at every step of the config's sweep.
    Sweep(Common),
    /// Check the closed form against the brute-force oracle on seeded random
    /// instances (plus the scenario itself).
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        instances: usize,
    },
}

#[derive(Args)]
struct Common {
    /// JSON scenario config.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to csv for `sweep` and json otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

const EXIT_INVALID: u8 = 1;
const EXIT_VERIFY_FAILED: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(common) => {
            let cfg = load(&common.config)?;
            let report = run_solve(&cfg);
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let bytes = match common.format.unwrap_or(Format::Json) {
                Format::Json => json(&report)?,
                Format::Csv => solve_csv(&report)?,
            };
            emit(common.out.as_deref(), &bytes)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(common) => {
            let cfg = load(&common.config)?;
            let rows = run_sweep(&cfg)?;
            let bytes = match common.format.unwrap_or(Format::Csv) {
                Format::Json => json(&rows)?,
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_sweep_csv(&rows, &mut buf)?;
                    buf
                }
            };
            emit(common.out.as_deref(), &bytes)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            common,
            seed,
            instances,
        } => {
            let cfg = load(&common.config)?;
            let summary = run_verify(&cfg, instances, seed);
            let bytes = match common.format.unwrap_or(Format::Json) {
                Format::Json => json(&summary)?,
                Format::Csv => verify_csv(&summary)?,
            };
            emit(common.out.as_deref(), &bytes)?;
            eprintln!(
                "{}/{} instances pass (scenario {})",
                summary.passed,
                summary.instances,
                if summary.scenario.pass {
                    "passes"
                } else {
                    "fails"
                }
            );
            if summary.all_passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                let named = std::iter::once(("scenario".to_string(), &summary.scenario))
                    .chain(summary.results.iter().map(|r| (format!("#{}", r.index), r)));
                for (name, r) in named.filter(|(_, r)| !r.pass) {
                    eprintln!(
                        "FAIL {name}: utility delta {:e}, decision deltas {:?}",
                        r.utility_delta, r.deltas
                    );
                }
                Ok(ExitCode::from(EXIT_VERIFY_FAILED))
            }
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(buf)
}

/// One row per case; `chosen` marks the equilibrium.
fn solve_csv(report: &SolveReport) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record([
            "level",
            "chosen",
            "feasible",
            "regime",
            "investment",
            "p0",
            "p1",
            "platform_utility",
            "user_utility",
        ])?;
        let eq = &report.equilibrium;
        for case in [&eq.case1, &eq.case2] {
            let d = case.decision;
            w.write_record([
                case.level.as_str().to_string(),
                (case.level == eq.chosen.level).to_string(),
                case.feasible.to_string(),
                case.regime
                    .map(|r| r.as_str().to_string())
                    .unwrap_or_default(),
                opt(d.map(|d| d.investment)),
                opt(d.map(|d| d.p0)),
                opt(d.map(|d| d.p1)),
                opt(case.platform_utility),
                opt(case.user_utility),
            ])?;
        }
        w.flush()?;
    }
    Ok(buf)
}

/// One row per instance; the scenario itself is row `scenario`.
fn verify_csv(summary: &VerifySummary) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record([
            "instance",
            "family",
            "pass",
            "level",
            "closed_form_utility",
            "oracle_utility",
            "utility_delta",
            "delta_investment",
            "delta_p0",
            "delta_p1",
        ])?;
        let rows = std::iter::once(("scenario".to_string(), &summary.scenario))
            .chain(summary.results.iter().map(|r| (r.index.to_string(), r)));
        for (name, r) in rows {
            w.write_record([
                name,
                r.family.as_str().to_string(),
                r.pass.to_string(),
                r.level.as_str().to_string(),
                r.closed_form_utility.to_string(),
                r.oracle_utility.to_string(),
                r.utility_delta.to_string(),
                opt(r.deltas.investment),
                opt(r.deltas.p0),
                opt(r.deltas.p1),
            ])?;
        }
        w.flush()?;
    }
    Ok(buf)
}
