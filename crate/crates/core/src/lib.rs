//! Stackelberg equilibrium of the platform-users data-dividend game.
//!
//! A platform invests `I` in data protection and posts dividends `p0`/`p1`
//! for low/high data sharing; homogeneous users then pick a sharing level.
//! [`equilibrium::solve_equilibrium`] computes the platform's optimum in
//! closed form, and [`oracle`] re-derives it by brute force.

pub mod breach;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod oracle;
pub mod sweep;

pub use breach::{BreachFamily, BreachModel};
pub use equilibrium::{
    candidate_investments, solve_case1, solve_case2, solve_equilibrium, CandidateInvestments,
    CaseSolution, Equilibrium, Regime,
};
pub use error::Error;
pub use game::{GameParams, PlatformDecision, SharingLevel};
pub use oracle::{brute_force_equilibrium, verify, OracleConfig, VerificationReport};
pub use sweep::{parse_config, run_solve, run_sweep, run_verify, ScenarioConfig, SweepRow};
