//! Middle layer: a DR provider facing price `lambda_dr` from the utility
//! dispatches its end users and keeps the spread between what it is paid and
//! what it pays them.
//!
//! The reduced provider objective has no cross-user terms, so each member's
//! quantity is that member's best response given every reported willingness;
//! the members interact only through the price the utility later settles on.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::eu::{self, EuResponse};
use crate::model::{AlgorithmConfig, DrProgram, EndUser};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgramResponse {
    pub program_id: String,
    pub interval: usize,
    pub duration: f64,
    pub lambda_dr: f64,
    /// Member responses in program declaration order.
    pub eu_responses: Vec<EuResponse>,
    /// Sum of member provisions, kW.
    pub aggregate_dr: f64,
    /// Sum of member base loads, kW.
    pub base_total: f64,
    pub provider_profit: f64,
}

/// One member's response at price `lambda_dr` in an interval of `duration`
/// hours. Revenue is energy based, the inconvenience is charged once, so the
/// member faces the effective price `lambda_dr * duration`.
pub fn solve_member(
    member: &EndUser,
    interval: usize,
    duration: f64,
    lambda_dr: f64,
    solver_tol: f64,
) -> Result<EuResponse> {
    let base = member
        .base_load
        .get(interval)
        .copied()
        .ok_or_else(|| domain("interval", interval as f64, "has no base load"))?;
    let p_max = eu::dr_upper_bound(member.willingness, base)?;
    let effective = lambda_dr * duration;
    let p_dr = eu::best_response(effective, p_max, solver_tol)?;

    let (lambda_eu, eu_profit) = if p_max == 0.0 {
        (0.0, 0.0)
    } else {
        let lambda_eu = eu::recover_eu_price(p_dr, p_max)? / duration;
        let profit = if p_dr > 0.0 {
            eu::eu_profit(lambda_eu, p_dr, p_max, duration)?
        } else {
            0.0
        };
        (lambda_eu, profit)
    };

    Ok(EuResponse {
        eu_id: member.id.clone(),
        interval,
        duration,
        p_max,
        p_dr,
        lambda_eu,
        eu_profit,
    })
}

/// Dispatches every member of `program` at price `lambda_dr` in interval `t`.
pub fn solve_program(
    program: &DrProgram,
    members: &[&EndUser],
    lambda_dr: f64,
    t: usize,
    duration: f64,
    cfg: &AlgorithmConfig,
) -> Result<ProgramResponse> {
    if !(lambda_dr.is_finite() && lambda_dr >= 0.0) {
        return Err(domain("lambda_dr", lambda_dr, "must be finite and >= 0"));
    }
    if members.is_empty() {
        return Err(domain(
            "members",
            0.0,
            "a program needs at least one member",
        ));
    }
    let eu_responses = members
        .iter()
        .map(|m| solve_member(m, t, duration, lambda_dr, cfg.solver_tol))
        .collect::<Result<Vec<_>>>()?;
    let aggregate_dr = eu_responses.iter().map(|r| r.p_dr).sum();
    let base_total = members.iter().map(|m| m.base_load[t]).sum();

    let mut resp = ProgramResponse {
        program_id: program.id.clone(),
        interval: t,
        duration,
        lambda_dr,
        eu_responses,
        aggregate_dr,
        base_total,
        provider_profit: 0.0,
    };
    resp.provider_profit = provider_profit(&resp);
    Ok(resp)
}

/// Provider profit: the price spread times energy, summed over members.
pub fn provider_profit(resp: &ProgramResponse) -> f64 {
    resp.eu_responses
        .iter()
        .map(|r| (resp.lambda_dr - r.lambda_eu) * r.p_dr * resp.duration)
        .sum()
}
