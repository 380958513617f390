//! Lower layer: end-user profit model, the reduced single-level best response
//! of a provider/end-user pair, and the KKT certificate for that response.
//!
//! For one end user and one interval the provider maximizes
//!
//! ```text
//! lambda_dr * p  -  p_max * p / (p_max - p)^2        over 0 <= p < p_max
//! ```
//!
//! which is strictly concave, so the maximizer is either the origin (when the
//! marginal value at zero, `lambda_dr - 1/p_max`, is not positive) or the
//! unique zero of the strictly decreasing derivative. The end-user price is
//! then read off the end user's own stationarity condition.

use serde::Serialize;

use crate::error::{domain, Error, Result};

/// Upper bound of an end user's DR provision: `alpha * base_load`.
pub fn dr_upper_bound(alpha: f64, base_load: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(domain("willingness", alpha, "must lie in [0, 1]"));
    }
    if !(base_load.is_finite() && base_load >= 0.0) {
        return Err(domain("base_load", base_load, "must be finite and >= 0"));
    }
    Ok(alpha * base_load)
}

fn check_open_range(p_dr: f64, p_max: f64) -> Result<()> {
    if !(p_max.is_finite() && p_max > 0.0) {
        return Err(domain("p_max", p_max, "must be finite and > 0"));
    }
    if !(p_dr >= 0.0 && p_dr < p_max) {
        return Err(domain("p_dr", p_dr, "must satisfy 0 <= p_dr < p_max"));
    }
    Ok(())
}

/// Inconvenience `p_dr / (p_max - p_dr)`, charged once per interval.
pub fn inconvenience_cost(p_dr: f64, p_max: f64) -> Result<f64> {
    check_open_range(p_dr, p_max)?;
    Ok(p_dr / (p_max - p_dr))
}

/// End-user profit over one interval: energy revenue minus inconvenience.
pub fn eu_profit(lambda_eu: f64, p_dr: f64, p_max: f64, duration: f64) -> Result<f64> {
    let cost = inconvenience_cost(p_dr, p_max)?;
    Ok(lambda_eu * p_dr * duration - cost)
}

/// Provider-side objective for one end user after the end-user price has been
/// eliminated.
pub fn leader_objective(p_dr: f64, lambda_dr: f64, p_max: f64) -> Result<f64> {
    check_open_range(p_dr, p_max)?;
    let gap = p_max - p_dr;
    Ok(lambda_dr * p_dr - p_max * p_dr / (gap * gap))
}

/// Derivative of [`leader_objective`] in `p_dr`.
pub fn marginal_leader_value(p_dr: f64, lambda_dr: f64, p_max: f64) -> Result<f64> {
    check_open_range(p_dr, p_max)?;
    Ok(marginal(p_dr, lambda_dr, p_max))
}

#[inline]
fn marginal(p: f64, lambda: f64, p_max: f64) -> f64 {
    let gap = p_max - p;
    lambda - p_max * (p_max + p) / (gap * gap * gap)
}

fn check_price_and_capacity(lambda_dr: f64, p_max: f64) -> Result<()> {
    if !(lambda_dr.is_finite() && lambda_dr >= 0.0) {
        return Err(domain("lambda_dr", lambda_dr, "must be finite and >= 0"));
    }
    if !(p_max.is_finite() && p_max >= 0.0) {
        return Err(domain("p_max", p_max, "must be finite and >= 0"));
    }
    Ok(())
}

/// Reservation price `1/p_max`: at or below it the optimal provision is zero.
pub fn participation_threshold(p_max: f64) -> f64 {
    1.0 / p_max
}

/// Optimal provision for price `lambda_dr` and capacity `p_max`.
///
/// Bisection on the first-order condition until the bracket is narrower than
/// `tol * p_max`, followed by one false-position step inside the final
/// bracket. The result always lies in `[0, p_max)`.
pub fn best_response(lambda_dr: f64, p_max: f64, tol: f64) -> Result<f64> {
    check_price_and_capacity(lambda_dr, p_max)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(domain("tol", tol, "must be finite and > 0"));
    }
    if p_max == 0.0 || lambda_dr <= participation_threshold(p_max) {
        return Ok(0.0);
    }

    let width = tol * p_max;
    let (mut lo, mut hi) = (0.0_f64, p_max);
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if marginal(mid, lambda_dr, p_max) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let f_lo = marginal(lo, lambda_dr, p_max);
    let f_hi = marginal(hi, lambda_dr, p_max);
    let mid = 0.5 * (lo + hi);
    let p = if f_lo > 0.0 && f_hi.is_finite() && f_lo > f_hi {
        (lo + f_lo * (hi - lo) / (f_lo - f_hi)).clamp(lo, hi)
    } else {
        mid
    };
    debug_assert!((0.0..p_max).contains(&p));
    Ok(p)
}

/// End-user price implied by the end user's stationarity condition at `p_dr`.
pub fn recover_eu_price(p_dr: f64, p_max: f64) -> Result<f64> {
    check_open_range(p_dr, p_max)?;
    let gap = p_max - p_dr;
    Ok(p_max / (gap * gap))
}

/// Grid argmax of [`leader_objective`] over `n_points` uniform points in
/// `[0, p_max * (1 - 1/n_points)]`; ties go to the smaller provision.
pub fn brute_force_best_response(lambda_dr: f64, p_max: f64, n_points: usize) -> Result<f64> {
    check_price_and_capacity(lambda_dr, p_max)?;
    if n_points < 2 {
        return Err(domain("n_points", n_points as f64, "must be >= 2"));
    }
    if p_max == 0.0 {
        return Ok(0.0);
    }
    let h = p_max / n_points as f64;
    let mut best = (0.0, 0.0);
    for k in 1..n_points {
        let p = k as f64 * h;
        let gap = p_max - p;
        let v = lambda_dr * p - p_max * p / (gap * gap);
        if v > best.1 {
            best = (p, v);
        }
    }
    Ok(best.0)
}

/// One end user's equilibrium outcome in one interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EuResponse {
    pub eu_id: String,
    pub interval: usize,
    /// Hours covered by the interval.
    pub duration: f64,
    pub p_max: f64,
    pub p_dr: f64,
    /// Price paid by the provider, cents/kWh. For end users that do not
    /// participate this is their reservation price (0 without capacity).
    pub lambda_eu: f64,
    pub eu_profit: f64,
}

/// KKT certificate of an end-user response under the big-M encoding with
/// `M = p_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktRecord {
    pub eu_id: String,
    pub interval: usize,
    pub mu_lower: f64,
    pub mu_upper: f64,
    pub psi: u8,
    pub xi: u8,
    pub big_m: f64,
    /// `lambda_eu*d - p_max/(p_max-p)^2 + mu_lower - mu_upper`.
    pub stationarity: f64,
    /// `p * mu_lower`.
    pub complementarity_lower: f64,
    /// `(p_max - p) * mu_upper`.
    pub complementarity_upper: f64,
    /// Largest violation among the big-M box constraints and `M = p_max`.
    pub bound_violation: f64,
    /// Violation of `0 <= lambda_eu <= lambda_dr` for participating users.
    pub price_bound_violation: f64,
    /// Derivative of the provider objective at the response; diagnostic only.
    pub leader_gradient: f64,
}

impl KktRecord {
    /// Largest absolute residual across the optimality system.
    pub fn max_residual(&self) -> f64 {
        [
            self.stationarity.abs(),
            self.complementarity_lower.abs(),
            self.complementarity_upper.abs(),
            self.bound_violation,
            self.price_bound_violation,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn check_contract(r: &EuResponse) -> std::result::Result<(), String> {
    let finite = [r.duration, r.p_max, r.p_dr, r.lambda_eu, r.eu_profit]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        return Err("non-finite field".into());
    }
    if r.duration <= 0.0 {
        return Err(format!("duration {} is not positive", r.duration));
    }
    if r.p_max < 0.0 {
        return Err(format!("p_max {} is negative", r.p_max));
    }
    if r.p_dr < 0.0 {
        return Err(format!("p_dr {} is negative", r.p_dr));
    }
    if r.p_max > 0.0 && r.p_dr >= r.p_max {
        return Err(format!("p_dr {} reaches p_max {}", r.p_dr, r.p_max));
    }
    if r.p_max == 0.0 && r.p_dr != 0.0 {
        return Err(format!("p_dr {} without capacity", r.p_dr));
    }
    if r.lambda_eu < 0.0 {
        return Err(format!("lambda_eu {} is negative", r.lambda_eu));
    }
    Ok(())
}

/// Builds the duals and binaries implied by `response` and evaluates every
/// residual of the end user's optimality system.
///
/// Interior responses get `psi = xi = 1` and zero duals. Responses at the
/// origin carry `mu_lower = 1/p_max - lambda_eu*d`; `psi` drops to 0 when
/// that dual is positive.
pub fn verify_kkt(lambda_dr: f64, response: &EuResponse) -> Result<KktRecord> {
    check_contract(response).map_err(|reason| Error::Contract {
        eu_id: response.eu_id.clone(),
        interval: response.interval,
        reason,
    })?;
    let EuResponse {
        p_max,
        p_dr: p,
        lambda_eu,
        duration: d,
        ..
    } = *response;
    let big_m = p_max;

    let mut rec = KktRecord {
        eu_id: response.eu_id.clone(),
        interval: response.interval,
        mu_lower: 0.0,
        mu_upper: 0.0,
        psi: 1,
        xi: 1,
        big_m,
        stationarity: 0.0,
        complementarity_lower: 0.0,
        complementarity_upper: 0.0,
        bound_violation: 0.0,
        price_bound_violation: 0.0,
        leader_gradient: 0.0,
    };
    if p_max == 0.0 {
        return Ok(rec);
    }

    let gap = p_max - p;
    let inconvenience_slope = p_max / (gap * gap);
    if p == 0.0 {
        rec.mu_lower = inconvenience_slope - lambda_eu * d;
        if rec.mu_lower > 0.0 {
            rec.psi = 0;
        }
    } else {
        rec.leader_gradient = marginal(p, lambda_dr * d, p_max);
        rec.price_bound_violation = (lambda_eu - lambda_dr).max(0.0);
    }
    rec.stationarity = lambda_eu * d - inconvenience_slope + rec.mu_lower - rec.mu_upper;
    rec.complementarity_lower = p * rec.mu_lower;
    rec.complementarity_upper = gap * rec.mu_upper;

    let psi = f64::from(rec.psi);
    let xi = f64::from(rec.xi);
    rec.bound_violation = [
        -p,
        p - psi * big_m,
        -rec.mu_lower,
        rec.mu_lower - (1.0 - psi) * big_m,
        -gap,
        gap - xi * big_m,
        -rec.mu_upper,
        rec.mu_upper - (1.0 - xi) * big_m,
        (big_m - p_max).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference optimum for (lambda_dr = 2, p_max = 10), from a 30-digit root
    // solve of 2 = 10 (10 + p) / (10 - p)^3 cross-checked by a 2e6-point grid.
    const P_STAR: f64 = 5.716_712_392_168_545;
    const LAMBDA_EU_STAR: f64 = 0.545_061_524_440_158_1;
    // Same oracle for (lambda_dr = 0.2, p_max = 10).
    const P_STAR_LOW: f64 = 1.648_776_515_186_335;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn upper_bound() {
        assert!(close(dr_upper_bound(0.03, 230.0).unwrap(), 6.9, 1e-12));
        assert_eq!(dr_upper_bound(0.0, 100.0).unwrap(), 0.0);
        assert_eq!(dr_upper_bound(1.0, 57.0).unwrap(), 57.0);
        assert!(dr_upper_bound(1.3, 57.0).is_err());
        assert!(dr_upper_bound(-0.1, 57.0).is_err());
    }

    #[test]
    fn inconvenience() {
        assert_eq!(inconvenience_cost(0.0, 10.0).unwrap(), 0.0);
        assert_eq!(inconvenience_cost(5.0, 10.0).unwrap(), 1.0);
        assert_eq!(inconvenience_cost(7.5, 10.0).unwrap(), 3.0);
        assert!(inconvenience_cost(10.0, 10.0).is_err());
        assert!(inconvenience_cost(-1.0, 10.0).is_err());
    }

    #[test]
    fn profit() {
        assert_eq!(eu_profit(3.7, 0.0, 10.0, 1.0).unwrap(), 0.0);
        assert_eq!(eu_profit(2.0, 5.0, 10.0, 1.0).unwrap(), 9.0);
        let at_opt = eu_profit(LAMBDA_EU_STAR, P_STAR, 10.0, 1.0).unwrap();
        let closed = (P_STAR / (10.0 - P_STAR)).powi(2);
        assert!(close(at_opt, closed, 1e-12));
        assert!(close(at_opt, 1.781_304_698_121_078_6, 1e-12));
        assert!(eu_profit(1.0, 11.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn marginal_values() {
        assert!(close(
            marginal_leader_value(0.0, 0.7, 10.0).unwrap(),
            0.6,
            1e-15
        ));
        assert!(close(
            marginal_leader_value(5.0, 2.0, 10.0).unwrap(),
            0.8,
            1e-15
        ));
        assert!(close(
            marginal_leader_value(6.0, 2.0, 10.0).unwrap(),
            -0.5,
            1e-15
        ));
        assert!(marginal_leader_value(10.0, 2.0, 10.0).is_err());
    }

    #[test]
    fn best_response_examples() {
        assert_eq!(best_response(0.1, 10.0, 1e-10).unwrap(), 0.0);
        assert_eq!(best_response(0.05, 10.0, 1e-10).unwrap(), 0.0);
        assert_eq!(best_response(3.0, 0.0, 1e-10).unwrap(), 0.0);
        assert!(close(
            best_response(2.0, 10.0, 1e-10).unwrap(),
            P_STAR,
            1e-9
        ));
        assert!(close(
            best_response(0.2, 10.0, 1e-10).unwrap(),
            P_STAR_LOW,
            1e-9
        ));
        assert!(best_response(-1.0, 10.0, 1e-10).is_err());
        assert!(best_response(1.0, -10.0, 1e-10).is_err());
        assert!(best_response(1.0, 10.0, 0.0).is_err());
    }

    #[test]
    fn best_response_never_reaches_capacity() {
        for lambda in [1e3, 1e6, 1e12] {
            let p = best_response(lambda, 10.0, 1e-10).unwrap();
            assert!(p < 10.0 && p > 9.0, "{lambda} -> {p}");
        }
    }

    #[test]
    fn eu_price_examples() {
        assert!(close(recover_eu_price(0.0, 10.0).unwrap(), 0.1, 1e-15));
        assert!(close(recover_eu_price(5.0, 10.0).unwrap(), 0.4, 1e-15));
        let p = best_response(2.0, 10.0, 1e-10).unwrap();
        let lam = recover_eu_price(p, 10.0).unwrap();
        assert!(close(lam, LAMBDA_EU_STAR, 1e-9));
        assert!(close(lam / 2.0, (10.0 - p) / (10.0 + p), 1e-12));
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force_best_response(0.05, 10.0, 10_000).unwrap(), 0.0);
        assert_eq!(brute_force_best_response(5.0, 0.0, 10_000).unwrap(), 0.0);
        let grid = brute_force_best_response(2.0, 10.0, 10_000).unwrap();
        let exact = best_response(2.0, 10.0, 1e-10).unwrap();
        assert!((grid - exact).abs() <= 10.0 / 10_000.0);
        assert!(brute_force_best_response(2.0, 10.0, 1).is_err());
    }

    fn response(p_dr: f64, lambda_eu: f64) -> EuResponse {
        EuResponse {
            eu_id: "x".into(),
            interval: 0,
            duration: 1.0,
            p_max: 10.0,
            p_dr,
            lambda_eu,
            eu_profit: 0.0,
        }
    }

    #[test]
    fn kkt_interior() {
        let p = best_response(2.0, 10.0, 1e-10).unwrap();
        let lam = recover_eu_price(p, 10.0).unwrap();
        let rec = verify_kkt(2.0, &response(p, lam)).unwrap();
        assert_eq!((rec.psi, rec.xi), (1, 1));
        assert_eq!(rec.mu_upper, 0.0);
        assert_eq!(rec.big_m, 10.0);
        assert!(rec.max_residual() <= 1e-8, "{rec:?}");
        assert!(rec.leader_gradient.abs() <= 1e-8);
    }

    #[test]
    fn kkt_at_origin() {
        let rec = verify_kkt(0.05, &response(0.0, 0.05)).unwrap();
        assert!(close(rec.mu_lower, 0.05, 1e-15));
        assert_eq!(rec.psi, 0);
        assert!(rec.stationarity.abs() <= 1e-15);
        assert!(rec.max_residual() <= 1e-15);
    }

    #[test]
    fn kkt_flags_fabricated_response() {
        let rec = verify_kkt(2.0, &response(5.0, 0.0)).unwrap();
        assert!(close(rec.stationarity, -0.4, 1e-15));
        assert!(rec.max_residual() > 0.1);
    }

    #[test]
    fn kkt_rejects_broken_contract() {
        assert!(matches!(
            verify_kkt(2.0, &response(10.0, 1.0)),
            Err(Error::Contract { .. })
        ));
        assert!(verify_kkt(2.0, &response(1.0, -1.0)).is_err());
        let mut r = response(1.0, 1.0);
        r.p_max = 0.0;
        assert!(verify_kkt(2.0, &r).is_err());
    }
}
