//! Upper layer: the utility's profit from buying aggregated DR.
//!
//! Per interval the utility keeps the bills of the remaining load, pays every
//! provider its price times the delivered quantity, and saves generation cost
//! on the curtailed supply. All terms are energies over the interval, so each
//! is scaled by its duration.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::model::{IntervalLabel, Scenario, UtilityParams};
use crate::provider::{self, ProgramResponse};

/// Generation cost rate `c0 + c1 p + c2 p^2`.
pub fn generation_cost(p_g: f64, params: &UtilityParams) -> f64 {
    params.c0 + params.c1 * p_g + params.c2 * p_g * p_g
}

/// Saving in generation cost when `total_dr` kW of supply is displaced from
/// `p_pre`. Equal to `generation_cost(p_pre) - generation_cost(p_pre - total_dr)`.
pub fn operation_cost_reduction(p_pre: f64, total_dr: f64, params: &UtilityParams) -> Result<f64> {
    if total_dr.is_nan() || total_dr < 0.0 {
        return Err(domain("total_dr", total_dr, "must be >= 0"));
    }
    if total_dr > p_pre {
        return Err(domain(
            "total_dr",
            total_dr,
            "must not exceed pre-DR supply",
        ));
    }
    Ok(cost_reduction_unchecked(p_pre, total_dr, params))
}

#[inline]
pub(crate) fn cost_reduction_unchecked(p_pre: f64, total_dr: f64, params: &UtilityParams) -> f64 {
    (params.c1 + 2.0 * params.c2 * p_pre) * total_dr - params.c2 * total_dr * total_dr
}

/// Bills collected on the load left after DR, summed over programs.
pub fn bill_revenue(retail_rates: &[f64], responses: &[ProgramResponse]) -> f64 {
    retail_rates
        .iter()
        .zip(responses)
        .map(|(rate, r)| rate * (r.base_total - r.aggregate_dr) * r.duration)
        .sum()
}

/// Utility payments to all providers.
pub fn dr_payment(responses: &[ProgramResponse]) -> f64 {
    responses
        .iter()
        .map(|r| r.lambda_dr * r.aggregate_dr * r.duration)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UcIntervalResult {
    pub interval: usize,
    pub label: IntervalLabel,
    pub duration: f64,
    /// Price to each program, in scenario program order.
    pub lambda_dr: Vec<f64>,
    pub program_responses: Vec<ProgramResponse>,
    pub total_dr: f64,
    pub delta_cg: f64,
    pub bill_revenue: f64,
    pub dr_payment: f64,
    pub uc_profit: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Utility profit in interval `t` when program `i` is offered `prices[i]`.
pub fn uc_profit_interval(s: &Scenario, prices: &[f64], t: usize) -> Result<UcIntervalResult> {
    if prices.len() != s.programs.len() {
        return Err(domain(
            "prices",
            prices.len() as f64,
            "need one price per program",
        ));
    }
    let duration = s.time_grid.duration(t);
    let responses = s
        .programs
        .iter()
        .zip(prices)
        .map(|(p, &price)| {
            let members = s.members(p);
            provider::solve_program(p, &members, price, t, duration, &s.algorithm)
        })
        .collect::<Result<Vec<_>>>()?;
    compose_interval(s, prices, responses, t)
}

pub(crate) fn compose_interval(
    s: &Scenario,
    prices: &[f64],
    responses: Vec<ProgramResponse>,
    t: usize,
) -> Result<UcIntervalResult> {
    let duration = s.time_grid.duration(t);
    let rates: Vec<f64> = s.programs.iter().map(|p| p.retail_rate[t]).collect();
    let total_dr: f64 = responses.iter().map(|r| r.aggregate_dr).sum();
    let p_pre = s.utility.pre_dr_supply[t];
    if total_dr > p_pre {
        return Err(Error::DrExceedsSupply {
            interval: t,
            total_dr,
            pre_dr_supply: p_pre,
        });
    }
    let delta_cg = cost_reduction_unchecked(p_pre, total_dr, &s.utility) * duration;
    let bill = bill_revenue(&rates, &responses);
    let payment = dr_payment(&responses);
    let uc_profit = bill - payment + delta_cg;
    if !uc_profit.is_finite() {
        return Err(Error::NonFiniteProfit {
            interval: t,
            prices: prices.to_vec(),
        });
    }
    Ok(UcIntervalResult {
        interval: t,
        label: s.time_grid.intervals[t].label,
        duration,
        lambda_dr: prices.to_vec(),
        program_responses: responses,
        total_dr,
        delta_cg,
        bill_revenue: bill,
        dr_payment: payment,
        uc_profit,
        iterations: 1,
        converged: true,
    })
}
