mod common;

use common::{repeat_interval, single_provider, synthetic, two_providers, ProgramSketch};
use drgame::search::optimize_prices_with;
use drgame::utility::uc_profit_interval;
use drgame::*;
use proptest::prelude::*;

fn solve(s: &Scenario, mode: SearchMode) -> utility::UcIntervalResult {
    optimize_prices(s, 0, mode).unwrap()
}

/// Full enumeration through the public profit function.
fn naive_grid(s: &Scenario) -> (f64, Vec<f64>) {
    let n = s.programs.len();
    let len = s.algorithm.axis_len();
    let mut best = (f64::NEG_INFINITY, vec![]);
    let mut ks = vec![0usize; n];
    loop {
        let prices: Vec<f64> = ks.iter().map(|&k| s.algorithm.price_at(k)).collect();
        if let Ok(r) = uc_profit_interval(s, &prices, 0) {
            if r.uc_profit > best.0 {
                best = (r.uc_profit, prices);
            }
        }
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            ks[i] += 1;
            if ks[i] < len {
                break;
            }
            ks[i] = 0;
        }
    }
}

#[test]
fn sweep_lands_within_one_step_of_grid() {
    let s = single_provider();
    let paper = solve(&s, SearchMode::Paper);
    let grid = solve(&s, SearchMode::Grid);
    assert!((paper.lambda_dr[0] - grid.lambda_dr[0]).abs() <= s.algorithm.price_step + 1e-12);
    assert!(grid.uc_profit >= paper.uc_profit);
}

#[test]
fn coordinate_reaches_grid_profit_on_two_providers() {
    let s = two_providers();
    let coord = solve(&s, SearchMode::Coordinate);
    let grid = solve(&s, SearchMode::Grid);
    assert!(coord.converged);
    assert!(coord.uc_profit >= grid.uc_profit - s.algorithm.epsilon);
    assert!(grid.uc_profit >= coord.uc_profit);

    // No single-step move of one price gains more than epsilon.
    let step = s.algorithm.price_step;
    for i in 0..2 {
        for delta in [-step, step] {
            let mut prices = coord.lambda_dr.clone();
            prices[i] += delta;
            if prices[i] < 0.0 {
                continue;
            }
            let r = uc_profit_interval(&s, &prices, 0).unwrap();
            assert!(r.uc_profit <= coord.uc_profit + s.algorithm.epsilon);
        }
    }
}

#[test]
fn grid_matches_naive_enumeration() {
    let mut s = two_providers();
    s.algorithm.max_price = 12.0;
    s.algorithm.price_step = 0.1;
    let grid = solve(&s, SearchMode::Grid);
    let (best, prices) = naive_grid(&s);
    assert_eq!(grid.uc_profit, best);
    assert_eq!(grid.lambda_dr, prices);
}

#[test]
fn zero_willingness_sells_nothing() {
    let s = synthetic(
        &[("p", 9.0, &[(100.0, 0.0), (50.0, 0.0)])],
        2.0,
        0.01,
        500.0,
        20.0,
        0.01,
    );
    for mode in [SearchMode::Paper, SearchMode::Grid, SearchMode::Coordinate] {
        let r = solve(&s, mode);
        assert_eq!(r.lambda_dr, vec![0.0], "{mode}");
        assert_eq!(r.uc_profit, 9.0 * 150.0, "{mode}");
        assert_eq!(r.total_dr, 0.0);
    }
    assert_eq!(solve(&s, SearchMode::Coordinate).iterations, 1);
}

#[test]
fn faithful_stop_ends_on_the_first_flat_step() {
    // Below every participation threshold the profit is flat, so the literal
    // rule stops right away while the default keeps sweeping.
    let mut s = synthetic(&[("p", 9.0, &[(10.0, 0.1)])], 30.0, 0.01, 500.0, 20.0, 0.01);
    let default = solve(&s, SearchMode::Paper);
    s.algorithm.faithful_stop = true;
    let faithful = solve(&s, SearchMode::Paper);
    assert!(faithful.lambda_dr[0] < 1.0);
    assert_eq!(faithful.total_dr, 0.0);
    assert!(default.lambda_dr[0] > 1.0);
    assert!(default.uc_profit > faithful.uc_profit);
}

#[test]
fn one_interval_event_equals_interval_solve() {
    let s = two_providers();
    let event = run_event(&s).unwrap();
    let single = solve(&s, s.algorithm.mode);
    assert_eq!(event.intervals, vec![single.clone()]);
    assert_eq!(event.uc_profit, single.uc_profit);
}

#[test]
fn intervals_separate() {
    let mut s = repeat_interval(&two_providers(), 3);
    s.algorithm.mode = SearchMode::Grid;
    let r = run_event(&s).unwrap();
    for iv in &r.intervals[1..] {
        assert_eq!(iv.lambda_dr, r.intervals[0].lambda_dr);
        assert_eq!(iv.uc_profit, r.intervals[0].uc_profit);
    }
    let sum: f64 = r.intervals.iter().map(|iv| iv.uc_profit).sum();
    assert_eq!(r.uc_profit, sum);
    assert!((r.uc_profit - 3.0 * r.intervals[0].uc_profit).abs() < 1e-9 * r.uc_profit);
}

#[test]
fn parallel_and_serial_runs_are_identical() {
    let mut s = builtin_scenario("ieee34-s2").unwrap();
    for mode in [SearchMode::Grid, SearchMode::Coordinate, SearchMode::Paper] {
        s.algorithm.mode = mode;
        let a = run_event_with(&s, SolveOptions { parallel: true }).unwrap();
        let b = run_event_with(&s, SolveOptions { parallel: false }).unwrap();
        let c = run_event_with(&s, SolveOptions { parallel: true }).unwrap();
        assert_eq!(a, b, "{mode}");
        assert_eq!(a, c, "{mode}");
    }
}

#[test]
fn oversized_grids_are_refused() {
    let mut s = synthetic(
        &[
            ("a", 9.0, &[(10.0, 0.1)]),
            ("b", 9.0, &[(10.0, 0.1)]),
            ("c", 9.0, &[(10.0, 0.1)]),
            ("d", 9.0, &[(10.0, 0.1)]),
        ],
        30.0,
        0.01,
        500.0,
        20.0,
        0.01,
    );
    s.algorithm.mode = SearchMode::Grid;
    assert!(matches!(run_event(&s), Err(Error::GridTooLarge { .. })));
}

#[test]
fn invalid_scenarios_are_not_solved() {
    let mut s = two_providers();
    s.eus[0].willingness = 1.3;
    match run_event(&s) {
        Err(Error::InvalidScenario(issues)) => {
            assert!(issues[0].to_string().contains("a-0"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn higher_willingness_buys_more_for_less() {
    let base = two_providers();
    let mut more = base.clone();
    more.eus[1].willingness = 0.35;
    let before = solve(&base, SearchMode::Grid);
    let after = solve(&more, SearchMode::Grid);
    let (b, a) = (&before.program_responses[0], &after.program_responses[0]);
    assert!(a.eu_responses[1].p_dr >= b.eu_responses[1].p_dr);
    assert!(a.eu_responses[1].eu_profit >= b.eu_responses[1].eu_profit);
    assert!(after.lambda_dr[0] <= before.lambda_dr[0]);
    assert!(a.eu_responses[0].p_dr <= b.eu_responses[0].p_dr);
    assert!(after.uc_profit >= before.uc_profit);
}

fn small_scenario() -> impl Strategy<Value = Scenario> {
    let member = (1.0..300.0f64, 0.0..=1.0f64);
    let program = (0.0..15.0f64, prop::collection::vec(member, 1..4));
    (
        prop::collection::vec(program, 1..3),
        -5.0..20.0f64,
        0.0..0.05f64,
        100.0..3000.0f64,
    )
        .prop_map(|(programs, c1, c2, p_pre)| {
            let names = ["a", "b"];
            let refs: Vec<ProgramSketch> = programs
                .iter()
                .enumerate()
                .map(|(i, (rate, m))| (names[i], *rate, m.as_slice()))
                .collect();
            synthetic(&refs, c1, c2, p_pre, 10.0, 0.1)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grid_dominates_other_modes(s in small_scenario()) {
        let opts = SolveOptions { parallel: false };
        let grid = optimize_prices_with(&s, 0, SearchMode::Grid, opts);
        prop_assume!(grid.is_ok());
        let grid = grid.unwrap();
        for mode in [SearchMode::Paper, SearchMode::Coordinate] {
            if let Ok(other) = optimize_prices_with(&s, 0, mode, opts) {
                prop_assert!(grid.uc_profit >= other.uc_profit - 1e-9 * grid.uc_profit.abs().max(1.0));
            }
        }
        let (best, _) = naive_grid(&s);
        prop_assert!((grid.uc_profit - best).abs() <= 1e-9 * best.abs().max(1.0));
    }
}
