//! Outer Stackelberg solve: the utility searches per-program prices on a
//! uniform axis `0, step, ..., max_price` and every provider answers with its
//! aggregate DR.
//!
//! Intervals are independent, so each is optimized on its own. Within an
//! interval a program's aggregate DR depends only on its own price, which lets
//! the grid and coordinate modes tabulate one response curve per program and
//! search over the table.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eu::{self, KktRecord};
use crate::model::{validate_scenario, EndUser, Scenario, SearchMode};
use crate::provider;
use crate::utility::{compose_interval, cost_reduction_unchecked, UcIntervalResult};

/// Largest number of leading-axis price vectors the grid mode enumerates.
pub const GRID_ENUMERATION_LIMIT: u128 = 50_000_000;

/// Cap on full passes of the coordinate mode.
pub const MAX_COORDINATE_PASSES: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    /// Spread grid evaluation and intervals over the rayon pool. Results are
    /// identical either way.
    pub parallel: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub scenario: String,
    pub mode: SearchMode,
    pub intervals: Vec<UcIntervalResult>,
    /// Sum of interval profits.
    pub uc_profit: f64,
    pub iterations: usize,
    pub converged: bool,
    /// One record per end user and interval, in interval then program order.
    pub kkt: Vec<KktRecord>,
}

impl EquilibriumResult {
    pub fn max_kkt_residual(&self) -> f64 {
        self.kkt
            .iter()
            .map(KktRecord::max_residual)
            .fold(0.0, f64::max)
    }
}

/// Solves every interval of the scenario with its configured mode.
pub fn run_event(s: &Scenario) -> Result<EquilibriumResult> {
    run_event_with(s, SolveOptions::default())
}

pub fn run_event_with(s: &Scenario, opts: SolveOptions) -> Result<EquilibriumResult> {
    let issues = validate_scenario(s);
    if !issues.is_empty() {
        return Err(Error::InvalidScenario(issues));
    }
    let mode = s.algorithm.mode;
    let solve = |t: usize| optimize_prices_with(s, t, mode, opts);
    let intervals = if opts.parallel {
        (0..s.time_grid.len())
            .into_par_iter()
            .map(solve)
            .collect::<Result<Vec<_>>>()?
    } else {
        (0..s.time_grid.len())
            .map(solve)
            .collect::<Result<Vec<_>>>()?
    };

    let mut kkt = Vec::new();
    for iv in &intervals {
        for pr in &iv.program_responses {
            for r in &pr.eu_responses {
                kkt.push(eu::verify_kkt(pr.lambda_dr, r)?);
            }
        }
    }
    Ok(EquilibriumResult {
        scenario: s.name.clone(),
        mode,
        uc_profit: intervals.iter().map(|iv| iv.uc_profit).sum(),
        iterations: intervals.iter().map(|iv| iv.iterations).sum(),
        converged: intervals.iter().all(|iv| iv.converged),
        intervals,
        kkt,
    })
}

/// Best price vector for interval `t` under `mode`.
pub fn optimize_prices(s: &Scenario, t: usize, mode: SearchMode) -> Result<UcIntervalResult> {
    optimize_prices_with(s, t, mode, SolveOptions::default())
}

pub fn optimize_prices_with(
    s: &Scenario,
    t: usize,
    mode: SearchMode,
    opts: SolveOptions,
) -> Result<UcIntervalResult> {
    let search = IntervalSearch::new(s, t, opts);
    let outcome = match mode {
        SearchMode::Paper => search.paper()?,
        SearchMode::Grid => search.grid()?,
        SearchMode::Coordinate => search.coordinate()?,
    };
    let prices: Vec<f64> = outcome
        .indices
        .iter()
        .map(|&k| s.algorithm.price_at(k))
        .collect();
    let responses = search.responses(&prices)?;
    let mut result = compose_interval(s, &prices, responses, t)?;
    result.iterations = outcome.iterations.max(1);
    result.converged = outcome.converged;
    Ok(result)
}

struct Outcome {
    indices: Vec<usize>,
    iterations: usize,
    converged: bool,
}

struct IntervalSearch<'a> {
    s: &'a Scenario,
    t: usize,
    opts: SolveOptions,
    members: Vec<Vec<&'a EndUser>>,
    duration: f64,
    rates: Vec<f64>,
    bases: Vec<f64>,
    p_pre: f64,
    axis_len: usize,
}

impl<'a> IntervalSearch<'a> {
    fn new(s: &'a Scenario, t: usize, opts: SolveOptions) -> Self {
        let members: Vec<Vec<&EndUser>> = s.programs.iter().map(|p| s.members(p)).collect();
        let bases = members
            .iter()
            .map(|m| m.iter().map(|e| e.base_load[t]).sum())
            .collect();
        Self {
            s,
            t,
            opts,
            duration: s.time_grid.duration(t),
            rates: s.programs.iter().map(|p| p.retail_rate[t]).collect(),
            bases,
            p_pre: s.utility.pre_dr_supply[t],
            axis_len: s.algorithm.axis_len(),
            members,
        }
    }

    fn n_programs(&self) -> usize {
        self.s.programs.len()
    }

    fn responses(&self, prices: &[f64]) -> Result<Vec<provider::ProgramResponse>> {
        self.s
            .programs
            .iter()
            .zip(&self.members)
            .zip(prices)
            .map(|((p, m), &price)| {
                provider::solve_program(p, m, price, self.t, self.duration, &self.s.algorithm)
            })
            .collect()
    }

    fn aggregate(&self, i: usize, k: usize) -> Result<f64> {
        let price = self.s.algorithm.price_at(k);
        let r = provider::solve_program(
            &self.s.programs[i],
            &self.members[i],
            price,
            self.t,
            self.duration,
            &self.s.algorithm,
        )?;
        Ok(r.aggregate_dr)
    }

    /// Aggregate DR of program `i` at every axis price.
    fn curve(&self, i: usize) -> Result<Vec<f64>> {
        if self.opts.parallel {
            (0..self.axis_len)
                .into_par_iter()
                .map(|k| self.aggregate(i, k))
                .collect()
        } else {
            (0..self.axis_len).map(|k| self.aggregate(i, k)).collect()
        }
    }

    /// Utility profit for given prices and aggregates; `None` when the DR
    /// would exceed the pre-event supply. Mirrors `compose_interval` term by
    /// term so search values equal reported values exactly.
    fn value(&self, prices: &[f64], drs: &[f64]) -> Option<f64> {
        let d = self.duration;
        let total: f64 = drs.iter().sum();
        if total > self.p_pre {
            return None;
        }
        let delta_cg = cost_reduction_unchecked(self.p_pre, total, &self.s.utility) * d;
        let bill: f64 = self
            .rates
            .iter()
            .zip(&self.bases)
            .zip(drs)
            .map(|((rate, base), dr)| rate * (base - dr) * d)
            .sum();
        let payment: f64 = prices.iter().zip(drs).map(|(l, dr)| l * dr * d).sum();
        Some(bill - payment + delta_cg)
    }

    fn checked_value(&self, prices: &[f64], drs: &[f64]) -> Result<Option<f64>> {
        match self.value(prices, drs) {
            Some(v) if !v.is_finite() => Err(Error::NonFiniteProfit {
                interval: self.t,
                prices: prices.to_vec(),
            }),
            other => Ok(other),
        }
    }

    /// Lockstep sweep: every program gets the same price, raised one step at
    /// a time until the profit change falls within epsilon.
    fn paper(&self) -> Result<Outcome> {
        let cfg = &self.s.algorithm;
        let n = self.n_programs();
        let has_capacity =
            self.members.iter().flatten().any(|e| {
                eu::dr_upper_bound(e.willingness, e.base_load[self.t]).is_ok_and(|p| p > 0.0)
            });

        let mut iter = 1;
        let mut previous = 0.0;
        let mut best: Option<(f64, usize)> = None;
        let mut stop_at = None;
        for k in 0..self.axis_len {
            let price = cfg.price_at(k);
            let prices = vec![price; n];
            let drs = (0..n)
                .map(|i| self.aggregate(i, k))
                .collect::<Result<Vec<_>>>()?;
            let Some(profit) = self.checked_value(&prices, &drs)? else {
                break;
            };
            iter += 1;
            if best.is_none_or(|(v, _)| profit > v) {
                best = Some((profit, k));
            }
            // A step with no DR bought cannot be near the optimum unless no
            // end user can ever provide.
            let buying = drs.iter().any(|&d| d > 0.0) || !has_capacity;
            if (profit - previous).abs() <= cfg.epsilon && (cfg.faithful_stop || buying) {
                stop_at = Some(k);
                break;
            }
            previous = profit;
        }

        let Some((_, best_k)) = best else {
            return Err(Error::NoFeasiblePrice { interval: self.t });
        };
        let k = match (cfg.faithful_stop, stop_at) {
            (true, Some(k)) => k,
            _ => best_k,
        };
        Ok(Outcome {
            indices: vec![k; n],
            iterations: iter,
            converged: stop_at.is_some(),
        })
    }

    /// Exhaustive search over the Cartesian price grid. The leading axes are
    /// enumerated; the last axis is resolved exactly through the upper
    /// envelope of its profit lines in the other programs' total DR.
    fn grid(&self) -> Result<Outcome> {
        let n = self.n_programs();
        if n == 0 {
            return Ok(Outcome {
                indices: vec![],
                iterations: 1,
                converged: true,
            });
        }
        let len = self.axis_len;
        let outer = (len as u128).pow(n as u32 - 1);
        if outer > GRID_ENUMERATION_LIMIT {
            return Err(Error::GridTooLarge {
                points: outer,
                limit: GRID_ENUMERATION_LIMIT,
            });
        }
        let curves = (0..n).map(|i| self.curve(i)).collect::<Result<Vec<_>>>()?;
        let cfg = &self.s.algorithm;
        let last = n - 1;
        let envelope = self.last_axis_envelope(&curves[last]);
        let last_max = curves[last].iter().copied().fold(0.0, f64::max);
        let radix = len as u128;

        // Candidates carry the mixed-radix rank of their index vector, whose
        // numeric order is the lexicographic order of the vectors.
        let block = |k0: usize| -> Result<Option<(f64, u128)>> {
            let mut ks = vec![0usize; n];
            let mut drs = vec![0.0; n];
            let mut prices = vec![0.0; n];
            let mut best: Option<(f64, u128)> = None;
            let mut consider = |v: f64, ks: &[usize]| {
                let rank = ks.iter().fold(0u128, |r, &k| r * radix + k as u128);
                if best.is_none_or(|b| v > b.0 || (v == b.0 && rank < b.1)) {
                    best = Some((v, rank));
                }
            };
            let inner = if n == 1 { 1 } else { radix.pow(n as u32 - 2) };
            for j in 0..inner {
                let mut rest = j;
                for i in (1..last).rev() {
                    ks[i] = (rest % radix) as usize;
                    rest /= radix;
                }
                if n > 1 {
                    ks[0] = k0;
                }
                for i in 0..last {
                    drs[i] = curves[i][ks[i]];
                    prices[i] = cfg.price_at(ks[i]);
                }
                let others: f64 = drs[..last].iter().sum();
                if n > 1 && others + last_max <= self.p_pre {
                    let k = envelope.argmax(others);
                    ks[last] = k;
                    drs[last] = curves[last][k];
                    prices[last] = cfg.price_at(k);
                    if let Some(v) = self.checked_value(&prices, &drs)? {
                        consider(v, &ks);
                    }
                } else {
                    for (k, &x) in curves[last].iter().enumerate() {
                        ks[last] = k;
                        drs[last] = x;
                        prices[last] = cfg.price_at(k);
                        if let Some(v) = self.checked_value(&prices, &drs)? {
                            consider(v, &ks);
                        }
                    }
                }
            }
            Ok(best)
        };
        let pick = |a: Option<(f64, u128)>, b: Option<(f64, u128)>| match (a, b) {
            (Some(a), Some(b)) => Some(if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                b
            } else {
                a
            }),
            (a, None) => a,
            (None, b) => b,
        };

        let blocks = if n == 1 { 1 } else { len };
        let best = if self.opts.parallel {
            (0..blocks)
                .into_par_iter()
                .map(block)
                .try_reduce(|| None, |a, b| Ok(pick(a, b)))?
        } else {
            let mut acc = None;
            for k0 in 0..blocks {
                acc = pick(acc, block(k0)?);
            }
            acc
        };
        let (_, mut rank) = best.ok_or(Error::NoFeasiblePrice { interval: self.t })?;
        let mut indices = vec![0; n];
        for i in (0..n).rev() {
            indices[i] = (rank % radix) as usize;
            rank /= radix;
        }
        Ok(Outcome {
            indices,
            iterations: 1,
            converged: true,
        })
    }

    /// Profit contribution of the last program as lines in `S`, the total DR
    /// of all other programs: `-2 c2 x d * S + (a x - c2 x^2 - (rate + price) x) d`.
    fn last_axis_envelope(&self, curve: &[f64]) -> Envelope {
        let u = &self.s.utility;
        let d = self.duration;
        let a = u.c1 + 2.0 * u.c2 * self.p_pre;
        let rate = self.rates[self.n_programs() - 1];
        let lines = curve
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let price = self.s.algorithm.price_at(k);
                Line {
                    slope: -2.0 * u.c2 * x * d,
                    intercept: (a * x - u.c2 * x * x - (rate + price) * x) * d,
                    index: k,
                }
            })
            .collect();
        Envelope::new(lines)
    }

    /// Cyclic line sweeps in program declaration order, starting from zero
    /// prices; a coordinate moves only when it gains more than epsilon.
    fn coordinate(&self) -> Result<Outcome> {
        let n = self.n_programs();
        let cfg = &self.s.algorithm;
        let curves = (0..n).map(|i| self.curve(i)).collect::<Result<Vec<_>>>()?;
        let mut ks = vec![0usize; n];
        let mut drs: Vec<f64> = (0..n).map(|i| curves[i][0]).collect();
        let mut prices = vec![0.0; n];
        let mut current = self
            .checked_value(&prices, &drs)?
            .ok_or(Error::NoFeasiblePrice { interval: self.t })?;

        let mut passes = 0;
        let mut converged = false;
        while passes < MAX_COORDINATE_PASSES {
            passes += 1;
            let mut moved = false;
            for i in 0..n {
                let mut best = (current, ks[i]);
                for (k, &x) in curves[i].iter().enumerate() {
                    drs[i] = x;
                    prices[i] = cfg.price_at(k);
                    if let Some(v) = self.checked_value(&prices, &drs)? {
                        if v > best.0 || (v == best.0 && k < best.1) {
                            best = (v, k);
                        }
                    }
                }
                if best.1 != ks[i] && best.0 > current + cfg.epsilon {
                    ks[i] = best.1;
                    current = best.0;
                    moved = true;
                }
                drs[i] = curves[i][ks[i]];
                prices[i] = cfg.price_at(ks[i]);
            }
            if !moved {
                converged = true;
                break;
            }
        }
        Ok(Outcome {
            indices: ks,
            iterations: passes,
            converged,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Line {
    slope: f64,
    intercept: f64,
    index: usize,
}

impl Line {
    fn at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Upper envelope of a set of lines for exact max queries.
struct Envelope {
    hull: Vec<Line>,
    /// `breaks[j]` is where `hull[j + 1]` overtakes `hull[j]`.
    breaks: Vec<f64>,
}

impl Envelope {
    fn new(mut lines: Vec<Line>) -> Self {
        lines.sort_by(|a, b| {
            a.slope
                .total_cmp(&b.slope)
                .then(b.intercept.total_cmp(&a.intercept))
                .then(a.index.cmp(&b.index))
        });
        lines.dedup_by(|next, kept| next.slope == kept.slope);

        let mut hull: Vec<Line> = Vec::with_capacity(lines.len());
        for line in lines {
            while hull.len() >= 2 {
                let (l1, l2) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                // l2 never strictly wins if l3 overtakes l1 no later than l2 does.
                let lhs = (l1.intercept - line.intercept) * (l2.slope - l1.slope);
                let rhs = (l1.intercept - l2.intercept) * (line.slope - l1.slope);
                if lhs <= rhs {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(line);
        }
        let breaks = hull
            .windows(2)
            .map(|w| (w[0].intercept - w[1].intercept) / (w[1].slope - w[0].slope))
            .collect();
        Self { hull, breaks }
    }

    /// Index of the best line at `x`; exact ties go to the smaller index.
    fn argmax(&self, x: f64) -> usize {
        let j = self.breaks.partition_point(|&b| b < x);
        let lo = j.saturating_sub(1);
        let hi = (j + 1).min(self.hull.len() - 1);
        let mut best = self.hull[j];
        for line in &self.hull[lo..=hi] {
            let (v, bv) = (line.at(x), best.at(x));
            if v > bv || (v == bv && line.index < best.index) {
                best = *line;
            }
        }
        best.index
    }
}
