#![allow(dead_code)]

use drgame::*;

/// `(id, retail rate, [(base load, willingness)])`.
pub type ProgramSketch<'a> = (&'a str, f64, &'a [(f64, f64)]);

/// One-hour, single-interval scenario with end users `<program>-<k>`.
pub fn synthetic(
    programs: &[ProgramSketch],
    c1: f64,
    c2: f64,
    p_pre: f64,
    max_price: f64,
    step: f64,
) -> Scenario {
    let mut eus = Vec::new();
    let programs = programs
        .iter()
        .map(|&(id, rate, members)| {
            let ids: Vec<String> = (0..members.len()).map(|k| format!("{id}-{k}")).collect();
            for (eu_id, &(base, alpha)) in ids.iter().zip(members) {
                eus.push(EndUser {
                    id: eu_id.clone(),
                    program_id: id.to_string(),
                    base_load: vec![base],
                    willingness: alpha,
                });
            }
            DrProgram {
                id: id.to_string(),
                kind: ProgramKind::Business,
                retail_rate: vec![rate],
                eu_ids: ids,
            }
        })
        .collect();
    let mut algorithm = AlgorithmConfig::with_max_price(max_price);
    algorithm.price_step = step;
    Scenario {
        name: "synthetic".into(),
        time_grid: TimeGrid::new(vec![TimeInterval {
            label: IntervalLabel::Peak,
            hours: 1.0,
        }]),
        programs,
        eus,
        utility: UtilityParams {
            c0: 0.0,
            c1,
            c2,
            pre_dr_supply: vec![p_pre],
        },
        algorithm,
    }
}

pub fn single_provider() -> Scenario {
    synthetic(
        &[("p", 10.0, &[(100.0, 0.1), (80.0, 0.2), (50.0, 0.3)])],
        2.0,
        0.01,
        500.0,
        20.0,
        0.01,
    )
}

pub fn two_providers() -> Scenario {
    synthetic(
        &[
            ("a", 10.0, &[(100.0, 0.1), (80.0, 0.2)]),
            ("b", 8.0, &[(60.0, 0.4), (40.0, 0.05)]),
        ],
        2.0,
        0.01,
        500.0,
        20.0,
        0.01,
    )
}

/// Copies the single interval of `s` `n` times with the same data.
pub fn repeat_interval(s: &Scenario, n: usize) -> Scenario {
    let mut s = s.clone();
    s.time_grid = TimeGrid::new(vec![s.time_grid.intervals[0].clone(); n]);
    for p in &mut s.programs {
        p.retail_rate = vec![p.retail_rate[0]; n];
    }
    for e in &mut s.eus {
        e.base_load = vec![e.base_load[0]; n];
    }
    s.utility.pre_dr_supply = vec![s.utility.pre_dr_supply[0]; n];
    s
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
