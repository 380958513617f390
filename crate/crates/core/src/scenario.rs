//! Scenario documents.
//!
//! Scenarios are stored as TOML with an explicit `schema_version`. Unknown
//! keys are rejected, and saving is canonical: fixed key order and shortest
//! round-trip float rendering, so the same scenario always produces the same
//! bytes. End users are nested under the program that owns them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_scenario, AlgorithmConfig, DrProgram, EndUser, IntervalLabel, ProgramKind, Scenario,
    SearchMode, TimeGrid, TimeInterval, UtilityParams, ValidationIssue, DEFAULT_EPSILON,
    DEFAULT_ORACLE_GRID_POINTS, DEFAULT_PRICE_STEP, DEFAULT_SOLVER_TOL,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Prefix that selects an embedded preset instead of a file path.
pub const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("scenario is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ValidationIssue>),

    #[error("unknown builtin scenario `{0}` (available: {list})", list = crate::presets::PRESET_NAMES.join(", "))]
    UnknownPreset(String),

    #[error("cannot save scenario: {0}")]
    Unsavable(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    schema_version: u32,
    name: String,
    time_grid: Vec<IntervalDoc>,
    utility: UtilityDoc,
    programs: Vec<ProgramDoc>,
    algorithm: AlgorithmDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalDoc {
    label: IntervalLabel,
    hours: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtilityDoc {
    c0: f64,
    c1: f64,
    c2: f64,
    pre_dr_supply: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProgramDoc {
    id: String,
    kind: ProgramKind,
    retail_rate: Vec<f64>,
    eus: Vec<EuDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EuDoc {
    id: String,
    base_load: Vec<f64>,
    willingness: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlgorithmDoc {
    #[serde(default)]
    mode: SearchMode,
    #[serde(default = "default_step")]
    price_step: f64,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    /// Defaults to ten times the largest retail rate when absent.
    #[serde(default)]
    max_price: Option<f64>,
    #[serde(default = "default_tol")]
    solver_tol: f64,
    #[serde(default = "default_oracle_points")]
    oracle_grid_points: usize,
    #[serde(default)]
    faithful_stop: bool,
}

fn default_step() -> f64 {
    DEFAULT_PRICE_STEP
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_tol() -> f64 {
    DEFAULT_SOLVER_TOL
}
fn default_oracle_points() -> usize {
    DEFAULT_ORACLE_GRID_POINTS
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let table: toml::Table = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ScenarioError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let doc: ScenarioDoc = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ScenarioError::Schema(e.message().trim().to_string()))?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(ScenarioError::Schema(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    let scenario = from_doc(doc);
    let issues = validate_scenario(&scenario);
    if issues.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Invalid(issues))
    }
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_scenario(&text)
}

/// Resolves `builtin:NAME` to a preset and anything else to a file path.
pub fn resolve_scenario(spec: &str) -> Result<Scenario, ScenarioError> {
    match spec.strip_prefix(BUILTIN_PREFIX) {
        Some(name) => crate::presets::builtin_scenario(name),
        None => load_scenario_file(spec),
    }
}

fn from_doc(doc: ScenarioDoc) -> Scenario {
    let mut programs = Vec::with_capacity(doc.programs.len());
    let mut eus = Vec::new();
    for p in doc.programs {
        let eu_ids = p.eus.iter().map(|e| e.id.clone()).collect();
        for e in p.eus {
            eus.push(EndUser {
                id: e.id,
                program_id: p.id.clone(),
                base_load: e.base_load,
                willingness: e.willingness,
            });
        }
        programs.push(DrProgram {
            id: p.id,
            kind: p.kind,
            retail_rate: p.retail_rate,
            eu_ids,
        });
    }
    let mut scenario = Scenario {
        name: doc.name,
        time_grid: TimeGrid::new(
            doc.time_grid
                .into_iter()
                .map(|i| TimeInterval {
                    label: i.label,
                    hours: i.hours,
                })
                .collect(),
        ),
        programs,
        eus,
        utility: UtilityParams {
            c0: doc.utility.c0,
            c1: doc.utility.c1,
            c2: doc.utility.c2,
            pre_dr_supply: doc.utility.pre_dr_supply,
        },
        algorithm: AlgorithmConfig {
            price_step: doc.algorithm.price_step,
            epsilon: doc.algorithm.epsilon,
            max_price: 0.0,
            mode: doc.algorithm.mode,
            solver_tol: doc.algorithm.solver_tol,
            oracle_grid_points: doc.algorithm.oracle_grid_points,
            faithful_stop: doc.algorithm.faithful_stop,
        },
    };
    scenario.algorithm.max_price = doc
        .algorithm
        .max_price
        .unwrap_or_else(|| 10.0 * scenario.max_retail_rate());
    scenario
}

/// Canonical TOML rendering of a valid scenario.
pub fn save_scenario(s: &Scenario) -> Result<String, ScenarioError> {
    let issues = validate_scenario(s);
    if !issues.is_empty() {
        return Err(ScenarioError::Invalid(issues));
    }
    let programs = s
        .programs
        .iter()
        .map(|p| ProgramDoc {
            id: p.id.clone(),
            kind: p.kind,
            retail_rate: p.retail_rate.clone(),
            eus: s
                .members(p)
                .into_iter()
                .map(|e| EuDoc {
                    id: e.id.clone(),
                    base_load: e.base_load.clone(),
                    willingness: e.willingness,
                })
                .collect(),
        })
        .collect();
    let doc = ScenarioDoc {
        schema_version: SCHEMA_VERSION,
        name: s.name.clone(),
        time_grid: s
            .time_grid
            .intervals
            .iter()
            .map(|i| IntervalDoc {
                label: i.label,
                hours: i.hours,
            })
            .collect(),
        utility: UtilityDoc {
            c0: s.utility.c0,
            c1: s.utility.c1,
            c2: s.utility.c2,
            pre_dr_supply: s.utility.pre_dr_supply.clone(),
        },
        programs,
        algorithm: AlgorithmDoc {
            mode: s.algorithm.mode,
            price_step: s.algorithm.price_step,
            epsilon: s.algorithm.epsilon,
            max_price: Some(s.algorithm.max_price),
            solver_tol: s.algorithm.solver_tol,
            oracle_grid_points: s.algorithm.oracle_grid_points,
            faithful_stop: s.algorithm.faithful_stop,
        },
    };
    toml::to_string(&doc).map_err(|e| ScenarioError::Unsavable(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{builtin_scenario, PRESET_NAMES};

    #[test]
    fn presets_round_trip() {
        for name in PRESET_NAMES {
            let s = builtin_scenario(name).unwrap();
            let text = save_scenario(&s).unwrap();
            assert_eq!(load_scenario(&text).unwrap(), s, "{name}");
            assert_eq!(save_scenario(&s).unwrap(), text);
            assert!(!text.contains("nan") && !text.contains("inf"));
        }
    }

    #[test]
    fn saved_preset_lists_business_willingness() {
        let text = save_scenario(&builtin_scenario("ieee34-s1").unwrap()).unwrap();
        for alpha in ["0.03", "0.05", "0.08", "0.1", "0.12", "0.15", "0.17"] {
            assert!(
                text.contains(&format!("willingness = {alpha}\n")),
                "{alpha} missing"
            );
        }
    }

    const MINIMAL: &str = r#"
schema_version = 1
name = "mini"

[[time_grid]]
label = "peak"
hours = 1.0

[utility]
c0 = 0.0
c1 = 2.0
c2 = 0.01
pre_dr_supply = [500.0]

[[programs]]
id = "p"
kind = "business"
retail_rate = [10.0]

[[programs.eus]]
id = "a"
base_load = [100.0]
willingness = 0.1

[algorithm]
mode = "grid"
"#;

    #[test]
    fn defaults_fill_algorithm() {
        let s = load_scenario(MINIMAL).unwrap();
        assert_eq!(s.algorithm.mode, SearchMode::Grid);
        assert_eq!(s.algorithm.price_step, 0.01);
        assert_eq!(s.algorithm.max_price, 100.0);
        assert_eq!(s.eus[0].program_id, "p");
        assert_eq!(s.programs[0].eu_ids, vec!["a".to_string()]);
    }

    #[test]
    fn missing_retail_rate_is_named() {
        let text = MINIMAL.replace("retail_rate = [10.0]\n", "");
        match load_scenario(&text) {
            Err(ScenarioError::Schema(msg)) => assert!(msg.contains("retail_rate"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("c0 = 0.0", "c0 = 0.0\nc3 = 1.0");
        assert!(matches!(
            load_scenario(&text),
            Err(ScenarioError::Schema(_))
        ));
    }

    #[test]
    fn wrong_schema_version() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        assert!(matches!(
            load_scenario(&text),
            Err(ScenarioError::Schema(_))
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let text = MINIMAL.replace("hours = 1.0", "hours = = 1.0");
        match load_scenario(&text) {
            Err(ScenarioError::Syntax { line, .. }) => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_values_are_listed() {
        let text = MINIMAL.replace("willingness = 0.1", "willingness = 1.3");
        match load_scenario(&text) {
            Err(ScenarioError::Invalid(issues)) => assert_eq!(issues.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(
            resolve_scenario("builtin:nope"),
            Err(ScenarioError::UnknownPreset(_))
        ));
    }
}
