//! Solver and simulator for the three-layer demand-response game between a
//! vertically integrated utility, third-party DR providers and their end users.
//!
//! * [`eu`]: end-user model, the provider's reduced best response, KKT checks.
//! * [`provider`]: program-level dispatch and provider profit.
//! * [`utility`]: utility profit terms for one interval.
//! * [`search`]: outer price search and full-event runs.
//! * [`scenario`] and [`presets`]: scenario documents and embedded case studies.
//! * [`report`]: tables, series and comparisons derived from results.

pub mod error;
pub mod eu;
pub mod model;
pub mod presets;
pub mod provider;
pub mod report;
pub mod scenario;
pub mod search;
pub mod utility;

pub use error::{Error, Result};
pub use model::{
    validate_scenario, AlgorithmConfig, DrProgram, EndUser, IntervalLabel, ProgramKind, Scenario,
    SearchMode, TimeGrid, TimeInterval, UtilityParams, ValidationIssue,
};
pub use presets::builtin_scenario;
pub use scenario::{load_scenario, resolve_scenario, save_scenario, ScenarioError};
pub use search::{optimize_prices, run_event, run_event_with, EquilibriumResult, SolveOptions};
