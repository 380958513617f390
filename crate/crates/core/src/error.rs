use thiserror::Error;

use crate::model::ValidationIssue;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{quantity} = {value} is outside its domain: {expected}")]
    Domain {
        quantity: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("response of `{eu_id}` at interval {interval} breaks its contract: {reason}")]
    Contract {
        eu_id: String,
        interval: usize,
        reason: String,
    },

    #[error(
        "total DR {total_dr} kW exceeds pre-DR supply {pre_dr_supply} kW at interval {interval}"
    )]
    DrExceedsSupply {
        interval: usize,
        total_dr: f64,
        pre_dr_supply: f64,
    },

    #[error("UC profit is not finite at interval {interval} for prices {prices:?}")]
    NonFiniteProfit { interval: usize, prices: Vec<f64> },

    #[error("no feasible price vector at interval {interval}")]
    NoFeasiblePrice { interval: usize },

    #[error("grid search needs {points} enumerated price vectors, more than the limit of {limit}")]
    GridTooLarge { points: u128, limit: u128 },

    #[error("scenario is invalid ({} issue(s)): {}", .0.len(), join_issues(.0))]
    InvalidScenario(Vec<ValidationIssue>),
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(quantity: &'static str, value: f64, expected: &'static str) -> Error {
    Error::Domain {
        quantity,
        value,
        expected,
    }
}
