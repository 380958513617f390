//! Embedded case studies on the IEEE 34-bus and 69-bus feeders.
//!
//! Feeder data supplies end-user placement, base loads and willingness
//! parameters, and the cost coefficients `c1`/`c2`. The hourly load profiles,
//! tariff values and pre-event supply behind the original case studies are
//! not published, so every preset uses the same reconstructed two-interval
//! time-of-use day with the constants below:
//!
//! * one off-peak hour and one peak hour, with each end user's base load held
//!   at its stated value in both;
//! * summer time-of-use style retail rates ([`RESIDENTIAL_RATES`],
//!   [`BUSINESS_RATES`]), placeholders for a real tariff;
//! * a pre-event supply per feeder chosen so that the marginal generation
//!   cost sits above the retail rates and DR purchases are interior.
//!
//! Scenario 2 of each feeder differs from scenario 1 only in the
//! willingness of the end users listed in the corresponding `*_S2_CHANGES`.

use crate::model::{
    AlgorithmConfig, DrProgram, EndUser, IntervalLabel, ProgramKind, Scenario, SearchMode,
    TimeGrid, TimeInterval, UtilityParams,
};
use crate::scenario::ScenarioError;

pub const PRESET_NAMES: [&str; 4] = ["ieee34-s1", "ieee34-s2", "ieee69-s1", "ieee69-s2"];

/// Residential retail rate (off-peak, peak), cents/kWh.
pub const RESIDENTIAL_RATES: [f64; 2] = [7.0, 12.0];
/// Business retail rate (off-peak, peak), cents/kWh.
pub const BUSINESS_RATES: [f64; 2] = [6.5, 13.0];

/// Pre-event non-DR supply of the 34-bus feeder (off-peak, peak), kW.
pub const IEEE34_PRE_DR_SUPPLY: [f64; 2] = [3_030.0, 3_200.0];
/// Pre-event non-DR supply of the 69-bus feeder (off-peak, peak), kW.
pub const IEEE69_PRE_DR_SUPPLY: [f64; 2] = [3_300.0, 4_100.0];

/// Upper end of the price axes in every preset, cents/kWh.
pub const PRESET_MAX_PRICE: f64 = 20.0;

pub const IEEE34_COST: (f64, f64) = (-1088.2, 0.2024);
pub const IEEE69_COST: (f64, f64) = (-14.3, 0.004506);

/// (program id, kind, [(end-user id, base load kW, willingness)]).
type ProgramSpec = (
    &'static str,
    ProgramKind,
    &'static [(&'static str, f64, f64)],
);

const IEEE34_PROGRAMS: [ProgramSpec; 2] = [
    (
        "business",
        ProgramKind::Business,
        &[
            ("EU17", 230.0, 0.03),
            ("EU18", 230.0, 0.05),
            ("EU19", 230.0, 0.08),
            ("EU20", 230.0, 0.10),
            ("EU21", 230.0, 0.12),
            ("EU22", 230.0, 0.15),
            ("EU23", 230.0, 0.17),
        ],
    ),
    (
        "residential",
        ProgramKind::Residential,
        &[
            ("EU28", 75.0, 0.20),
            ("EU29", 75.0, 0.22),
            ("EU30", 75.0, 0.25),
            ("EU31", 57.0, 0.29),
            ("EU32", 57.0, 0.30),
            ("EU33", 57.0, 0.33),
            ("EU34", 57.0, 0.35),
        ],
    ),
];

pub const IEEE34_S2_CHANGES: [(&str, f64); 2] = [("EU18", 0.08), ("EU30", 0.40)];

// Buses 30-32, 38, 42, 44 and 47 carry no load and have no end user.
const IEEE69_PROGRAMS: [ProgramSpec; 3] = [
    (
        "residential-1",
        ProgramKind::Residential,
        &[
            ("EU28", 26.0, 0.15),
            ("EU29", 26.0, 0.24),
            ("EU33", 14.0, 0.28),
            ("EU34", 19.5, 0.21),
            ("EU35", 6.0, 0.32),
        ],
    ),
    (
        "residential-2",
        ProgramKind::Residential,
        &[
            ("EU36", 26.0, 0.46),
            ("EU37", 26.0, 0.51),
            ("EU39", 24.0, 0.55),
            ("EU40", 24.0, 0.59),
            ("EU41", 1.2, 0.70),
            ("EU43", 6.0, 0.64),
            ("EU45", 39.22, 0.40),
            ("EU46", 39.22, 0.36),
        ],
    ),
    (
        "business",
        ProgramKind::Business,
        &[
            ("EU48", 79.0, 0.03),
            ("EU49", 384.7, 0.02),
            ("EU50", 384.7, 0.01),
        ],
    ),
];

pub const IEEE69_S2_CHANGES: [(&str, f64); 3] = [("EU34", 0.30), ("EU36", 0.57), ("EU50", 0.06)];

fn build(
    name: &str,
    programs: &[ProgramSpec],
    cost: (f64, f64),
    pre_dr_supply: [f64; 2],
    changes: &[(&str, f64)],
) -> Scenario {
    let time_grid = TimeGrid::new(vec![
        TimeInterval {
            label: IntervalLabel::OffPeak,
            hours: 1.0,
        },
        TimeInterval {
            label: IntervalLabel::Peak,
            hours: 1.0,
        },
    ]);
    let mut eus = Vec::new();
    let programs = programs
        .iter()
        .map(|&(id, kind, members)| {
            for &(eu_id, base, alpha) in members {
                let alpha = changes
                    .iter()
                    .find(|(changed, _)| *changed == eu_id)
                    .map_or(alpha, |&(_, a)| a);
                eus.push(EndUser {
                    id: eu_id.to_string(),
                    program_id: id.to_string(),
                    base_load: vec![base; 2],
                    willingness: alpha,
                });
            }
            let rates = match kind {
                ProgramKind::Residential => RESIDENTIAL_RATES,
                ProgramKind::Business => BUSINESS_RATES,
            };
            DrProgram {
                id: id.to_string(),
                kind,
                retail_rate: rates.to_vec(),
                eu_ids: members.iter().map(|m| m.0.to_string()).collect(),
            }
        })
        .collect();
    let mut algorithm = AlgorithmConfig::with_max_price(PRESET_MAX_PRICE);
    algorithm.mode = SearchMode::Grid;
    Scenario {
        name: name.to_string(),
        time_grid,
        programs,
        eus,
        utility: UtilityParams {
            c0: 0.0,
            c1: cost.0,
            c2: cost.1,
            pre_dr_supply: pre_dr_supply.to_vec(),
        },
        algorithm,
    }
}

/// Returns one of the embedded case studies listed in [`PRESET_NAMES`].
pub fn builtin_scenario(name: &str) -> Result<Scenario, ScenarioError> {
    let s = match name {
        "ieee34-s1" => build(
            name,
            &IEEE34_PROGRAMS,
            IEEE34_COST,
            IEEE34_PRE_DR_SUPPLY,
            &[],
        ),
        "ieee34-s2" => build(
            name,
            &IEEE34_PROGRAMS,
            IEEE34_COST,
            IEEE34_PRE_DR_SUPPLY,
            &IEEE34_S2_CHANGES,
        ),
        "ieee69-s1" => build(
            name,
            &IEEE69_PROGRAMS,
            IEEE69_COST,
            IEEE69_PRE_DR_SUPPLY,
            &[],
        ),
        "ieee69-s2" => build(
            name,
            &IEEE69_PROGRAMS,
            IEEE69_COST,
            IEEE69_PRE_DR_SUPPLY,
            &IEEE69_S2_CHANGES,
        ),
        other => return Err(ScenarioError::UnknownPreset(other.to_string())),
    };
    Ok(s)
}
