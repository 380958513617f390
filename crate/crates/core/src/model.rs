//! Shared domain types and scenario-wide validation.
//!
//! Units are fixed across the crate: powers in kW, prices in cents/kWh,
//! durations in hours and money in cents. Per-interval quantities are stored
//! as vectors indexed by the interval position in the [`TimeGrid`].

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalLabel {
    Peak,
    OffPeak,
    SuperOffPeak,
}

impl IntervalLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            IntervalLabel::Peak => "peak",
            IntervalLabel::OffPeak => "off-peak",
            IntervalLabel::SuperOffPeak => "super-off-peak",
        }
    }
}

impl fmt::Display for IntervalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeInterval {
    pub label: IntervalLabel,
    /// Length of the interval in hours.
    pub hours: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeGrid {
    pub intervals: Vec<TimeInterval>,
}

impl TimeGrid {
    pub fn new(intervals: Vec<TimeInterval>) -> Self {
        Self { intervals }
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn duration(&self, t: usize) -> f64 {
        self.intervals[t].hours
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndUser {
    pub id: String,
    pub program_id: String,
    /// Base consumption per interval, kW.
    pub base_load: Vec<f64>,
    /// Reported willingness parameter in `[0, 1]`.
    pub willingness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgramKind {
    Residential,
    Business,
}

impl ProgramKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProgramKind::Residential => "residential",
            ProgramKind::Business => "business",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrProgram {
    pub id: String,
    pub kind: ProgramKind,
    /// Retail rate per interval, cents/kWh.
    pub retail_rate: Vec<f64>,
    /// Member end users in declaration order.
    pub eu_ids: Vec<String>,
}

/// Quadratic cost of the utility's non-DR generation plus its pre-event supply.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityParams {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// Supply from non-DR resources without the event, kW per interval.
    pub pre_dr_supply: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    /// Lockstep upward price sweep with the profit-change stopping rule.
    #[default]
    Paper,
    /// Exhaustive Cartesian grid over per-program prices.
    Grid,
    /// Cyclic per-program line sweeps.
    Coordinate,
}

impl SearchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::Paper => "paper",
            SearchMode::Grid => "grid",
            SearchMode::Coordinate => "coordinate",
        }
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(SearchMode::Paper),
            "grid" => Ok(SearchMode::Grid),
            "coordinate" => Ok(SearchMode::Coordinate),
            other => Err(format!(
                "unknown mode `{other}` (expected paper, grid or coordinate)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    /// Price increment of every sweep and grid axis, cents/kWh.
    pub price_step: f64,
    /// Stopping threshold on the change of UC profit between sweep steps, cents.
    pub epsilon: f64,
    /// Upper end of every price axis, cents/kWh.
    pub max_price: f64,
    pub mode: SearchMode,
    /// Relative bracket width at which the end-user bisection stops.
    pub solver_tol: f64,
    /// Resolution of the brute-force best-response oracle.
    pub oracle_grid_points: usize,
    /// Stop the paper-mode sweep at the first step satisfying the profit-change
    /// rule and report that step's prices instead of the best seen so far.
    pub faithful_stop: bool,
}

pub const DEFAULT_PRICE_STEP: f64 = 0.01;
pub const DEFAULT_EPSILON: f64 = 0.001;
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;
pub const DEFAULT_ORACLE_GRID_POINTS: usize = 10_000;
/// Largest number of points allowed on one price axis.
pub const MAX_AXIS_POINTS: usize = 1_000_000;

impl AlgorithmConfig {
    /// Defaults with the given price cap.
    pub fn with_max_price(max_price: f64) -> Self {
        Self {
            price_step: DEFAULT_PRICE_STEP,
            epsilon: DEFAULT_EPSILON,
            max_price,
            mode: SearchMode::Paper,
            solver_tol: DEFAULT_SOLVER_TOL,
            oracle_grid_points: DEFAULT_ORACLE_GRID_POINTS,
            faithful_stop: false,
        }
    }

    /// Number of points on a price axis `0, step, ..., <= max_price`.
    pub fn axis_len(&self) -> usize {
        (self.max_price / self.price_step + 1e-9).floor() as usize + 1
    }

    /// Price at axis index `k`. Computed by multiplication so every mode sees
    /// bitwise-identical prices for the same index.
    pub fn price_at(&self, k: usize) -> f64 {
        k as f64 * self.price_step
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub time_grid: TimeGrid,
    pub programs: Vec<DrProgram>,
    pub eus: Vec<EndUser>,
    pub utility: UtilityParams,
    pub algorithm: AlgorithmConfig,
}

impl Scenario {
    pub fn eu(&self, id: &str) -> Option<&EndUser> {
        self.eus.iter().find(|e| e.id == id)
    }

    pub fn program(&self, id: &str) -> Option<&DrProgram> {
        self.programs.iter().find(|p| p.id == id)
    }

    /// Members of `program` in the program's declaration order. Unknown ids
    /// are skipped; [`validate_scenario`] reports them.
    pub fn members(&self, program: &DrProgram) -> Vec<&EndUser> {
        program.eu_ids.iter().filter_map(|id| self.eu(id)).collect()
    }

    pub fn max_retail_rate(&self) -> f64 {
        self.programs
            .iter()
            .flat_map(|p| p.retail_rate.iter().copied())
            .fold(0.0, f64::max)
    }
}

/// The entity an issue refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subject {
    Scenario,
    TimeGrid,
    Interval(usize),
    EndUser(String),
    Program(String),
    Utility,
    Algorithm,
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Scenario => f.write_str("scenario"),
            Subject::TimeGrid => f.write_str("time grid"),
            Subject::Interval(t) => write!(f, "interval {t}"),
            Subject::EndUser(id) => write!(f, "end user `{id}`"),
            Subject::Program(id) => write!(f, "program `{id}`"),
            Subject::Utility => f.write_str("utility"),
            Subject::Algorithm => f.write_str("algorithm"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub subject: Subject,
    pub message: String,
}

impl ValidationIssue {
    fn new(subject: Subject, message: impl Into<String>) -> Self {
        Self {
            subject,
            message: message.into(),
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Checks every structural and range invariant of a scenario.
///
/// Issues are returned in a fixed order (grid, utility, algorithm, programs,
/// end users, cross references) so repeated calls yield identical lists.
pub fn validate_scenario(s: &Scenario) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let n = s.time_grid.len();

    if s.time_grid.is_empty() {
        issues.push(ValidationIssue::new(
            Subject::TimeGrid,
            "must contain at least one interval",
        ));
    }
    for (t, iv) in s.time_grid.intervals.iter().enumerate() {
        if !(iv.hours.is_finite() && iv.hours > 0.0) {
            issues.push(ValidationIssue::new(
                Subject::Interval(t),
                format!(
                    "duration must be a positive number of hours, got {}",
                    iv.hours
                ),
            ));
        }
    }

    let u = &s.utility;
    for (name, v) in [("c0", u.c0), ("c1", u.c1), ("c2", u.c2)] {
        if !v.is_finite() {
            issues.push(ValidationIssue::new(
                Subject::Utility,
                format!("{name} must be finite, got {v}"),
            ));
        }
    }
    check_series(
        &mut issues,
        Subject::Utility,
        "pre_dr_supply",
        &u.pre_dr_supply,
        n,
        |v| v > 0.0,
        "positive",
    );

    let a = &s.algorithm;
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !positive(a.price_step) {
        issues.push(ValidationIssue::new(
            Subject::Algorithm,
            format!("price_step must be positive, got {}", a.price_step),
        ));
    }
    if !positive(a.epsilon) {
        issues.push(ValidationIssue::new(
            Subject::Algorithm,
            format!("epsilon must be positive, got {}", a.epsilon),
        ));
    }
    if !positive(a.max_price) {
        issues.push(ValidationIssue::new(
            Subject::Algorithm,
            format!("max_price must be positive, got {}", a.max_price),
        ));
    }
    if positive(a.price_step)
        && positive(a.max_price)
        && a.max_price / a.price_step >= MAX_AXIS_POINTS as f64
    {
        issues.push(ValidationIssue::new(
            Subject::Algorithm,
            format!(
                "max_price / price_step = {} exceeds the limit of {MAX_AXIS_POINTS} axis points",
                a.max_price / a.price_step
            ),
        ));
    }
    if !(a.solver_tol > 0.0 && a.solver_tol <= 1e-4) {
        issues.push(ValidationIssue::new(
            Subject::Algorithm,
            format!("solver_tol must lie in (0, 1e-4], got {}", a.solver_tol),
        ));
    }
    if a.oracle_grid_points < 2 {
        issues.push(ValidationIssue::new(
            Subject::Algorithm,
            format!(
                "oracle_grid_points must be at least 2, got {}",
                a.oracle_grid_points
            ),
        ));
    }

    let mut program_ids = HashSet::new();
    for p in &s.programs {
        let subject = Subject::Program(p.id.clone());
        if !program_ids.insert(p.id.as_str()) {
            issues.push(ValidationIssue::new(
                subject.clone(),
                "duplicate program id",
            ));
        }
        if p.eu_ids.is_empty() {
            issues.push(ValidationIssue::new(
                subject.clone(),
                "must have at least one member end user",
            ));
        }
        check_series(
            &mut issues,
            subject,
            "retail_rate",
            &p.retail_rate,
            n,
            |v| v >= 0.0,
            "nonnegative",
        );
    }

    let mut eu_ids = HashSet::new();
    for e in &s.eus {
        let subject = Subject::EndUser(e.id.clone());
        if !eu_ids.insert(e.id.as_str()) {
            issues.push(ValidationIssue::new(
                subject.clone(),
                "duplicate end-user id",
            ));
        }
        if !(0.0..=1.0).contains(&e.willingness) {
            issues.push(ValidationIssue::new(
                subject.clone(),
                format!("willingness must lie in [0, 1], got {}", e.willingness),
            ));
        }
        check_series(
            &mut issues,
            subject,
            "base_load",
            &e.base_load,
            n,
            |v| v >= 0.0,
            "nonnegative",
        );
    }

    // Cross references: each EU belongs to exactly one program, and that
    // program lists it.
    let mut listed_by: HashMap<&str, Vec<&str>> = HashMap::new();
    for p in &s.programs {
        for id in &p.eu_ids {
            listed_by
                .entry(id.as_str())
                .or_default()
                .push(p.id.as_str());
            if !eu_ids.contains(id.as_str()) {
                issues.push(ValidationIssue::new(
                    Subject::Program(p.id.clone()),
                    format!("lists unknown end user `{id}`"),
                ));
            }
        }
    }
    for e in &s.eus {
        let subject = Subject::EndUser(e.id.clone());
        if !program_ids.contains(e.program_id.as_str()) {
            issues.push(ValidationIssue::new(
                subject,
                format!("belongs to unknown program `{}`", e.program_id),
            ));
            continue;
        }
        match listed_by.get(e.id.as_str()).map(Vec::as_slice) {
            Some([only]) if *only == e.program_id => {}
            Some(owners) if owners.len() > 1 => issues.push(ValidationIssue::new(
                subject,
                format!("listed by more than one program: {}", owners.join(", ")),
            )),
            _ => issues.push(ValidationIssue::new(
                subject,
                format!("not listed by its program `{}`", e.program_id),
            )),
        }
    }

    issues
}

fn check_series(
    issues: &mut Vec<ValidationIssue>,
    subject: Subject,
    field: &str,
    values: &[f64],
    expected_len: usize,
    ok: impl Fn(f64) -> bool,
    requirement: &str,
) {
    if values.len() != expected_len {
        issues.push(ValidationIssue::new(
            subject.clone(),
            format!(
                "{field} has {} values but the time grid has {expected_len} intervals",
                values.len()
            ),
        ));
    }
    for (t, &v) in values.iter().enumerate() {
        if !(v.is_finite() && ok(v)) {
            issues.push(ValidationIssue::new(
                subject.clone(),
                format!("{field}[{t}] must be {requirement}, got {v}"),
            ));
        }
    }
}
