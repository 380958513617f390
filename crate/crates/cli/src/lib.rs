//! Command-line driver: solve scenarios, lint them, cross-check the solver
//! against its oracles and compare two scenarios.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use drgame::eu;
use drgame::report::{self, Format, ReportBundle};
use drgame::{
    resolve_scenario, run_event_with, save_scenario, validate_scenario, EquilibriumResult,
    Scenario, SearchMode, SolveOptions,
};

pub const EXIT_OK: i32 = 0;
/// Failed solve, invalid scenario, failed check or I/O error.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Debug, Parser)]
#[command(
    name = "drgame",
    version,
    about = "Utility / DR provider / end-user pricing game solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a scenario and write its tables.
    Run(RunArgs),
    /// Check a scenario and list every problem found.
    Validate {
        #[arg(long, value_name = "PATH|builtin:NAME")]
        scenario: String,
    },
    /// Compare the configured search and the best responses with exhaustive oracles.
    Oracle(OracleArgs),
    /// Solve two scenarios and report the direction of every change.
    Compare(CompareArgs),
    /// Print the canonical scenario document.
    Export {
        #[arg(long, value_name = "PATH|builtin:NAME")]
        scenario: String,
        /// Write to this file instead of standard output.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Search mode; defaults to the scenario's own.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<SearchMode>,
    /// Price axis step, cents/kWh.
    #[arg(long, allow_negative_numbers = true)]
    step: Option<f64>,
    /// Profit-change threshold of the sweep and coordinate modes.
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
    /// Upper end of the price axes, cents/kWh.
    #[arg(long, allow_negative_numbers = true)]
    max_price: Option<f64>,
    /// Stop the sweep at the first step satisfying the profit-change rule.
    #[arg(long)]
    faithful: bool,
    /// Solve on the calling thread only.
    #[arg(long)]
    serial: bool,
}

impl SolveArgs {
    fn apply(&self, s: &mut Scenario) {
        let a = &mut s.algorithm;
        if let Some(m) = self.mode {
            a.mode = m;
        }
        if let Some(v) = self.step {
            a.price_step = v;
        }
        if let Some(v) = self.epsilon {
            a.epsilon = v;
        }
        if let Some(v) = self.max_price {
            a.max_price = v;
        }
        if self.faithful {
            a.faithful_stop = true;
        }
    }

    fn options(&self) -> SolveOptions {
        SolveOptions {
            parallel: !self.serial,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH|builtin:NAME")]
    scenario: String,
    #[command(flatten)]
    solve: SolveArgs,
    /// Directory for eu_table, provider_table, series and kkt_report.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: Format,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, value_name = "PATH|builtin:NAME")]
    scenario: String,
    #[command(flatten)]
    solve: SolveArgs,
    /// Resolution of the brute-force best response; defaults to the scenario's.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Baseline scenario.
    #[arg(value_name = "BEFORE")]
    before: String,
    /// Scenario to compare against the baseline.
    #[arg(value_name = "AFTER")]
    after: String,
    #[command(flatten)]
    solve: SolveArgs,
    /// Directory for the comparison table and the paired series.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: Format,
}

fn parse_mode(s: &str) -> Result<SearchMode, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
}

/// A failure already rendered for the user.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CliResult = Result<String, Failure>;

/// Runs the command line `args` (program name first), writing the report to
/// standard output and diagnostics to standard error. Returns the exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = panic::catch_unwind(AssertUnwindSafe(|| dispatch(cli)));
    match outcome {
        Ok(Ok(text)) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(text.as_bytes());
            EXIT_OK
        }
        Ok(Err(Failure(msg))) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
        Err(_) => {
            eprintln!("error: internal failure; please report the command line that caused it");
            EXIT_INTERNAL
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Run(a) => run(a),
        Command::Validate { scenario } => validate(&scenario),
        Command::Oracle(a) => oracle(a),
        Command::Compare(a) => compare(a),
        Command::Export { scenario, out } => export(&scenario, out.as_deref()),
    }
}

fn load(spec: &str) -> Result<Scenario, Failure> {
    resolve_scenario(spec).map_err(|e| Failure(format!("{spec}: {e}")))
}

fn solve(s: &Scenario, opts: SolveOptions) -> Result<EquilibriumResult, Failure> {
    run_event_with(s, opts).map_err(|e| Failure(format!("{}: {e}", s.name)))
}

fn summary(s: &Scenario, r: &EquilibriumResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {} mode {}", r.scenario, r.mode);
    let keys = report::interval_keys(&r.intervals);
    for (iv, key) in r.intervals.iter().zip(&keys) {
        let prices: Vec<String> = s
            .programs
            .iter()
            .zip(&iv.lambda_dr)
            .map(|(p, &l)| format!("{}={}", p.id, report::format_number(l)))
            .collect();
        let _ = writeln!(
            out,
            "interval {key}: lambda_dr {} total_dr {} uc_profit {} iterations {}{}",
            prices.join(" "),
            report::format_number(iv.total_dr),
            report::format_number(iv.uc_profit),
            iv.iterations,
            if iv.converged { "" } else { " (not converged)" }
        );
    }
    let _ = writeln!(out, "uc_profit {}", report::format_number(r.uc_profit));
    let _ = writeln!(
        out,
        "max_kkt_residual {}",
        report::format_number(r.max_kkt_residual())
    );
    out
}

fn run(a: RunArgs) -> CliResult {
    let mut s = load(&a.scenario)?;
    a.solve.apply(&mut s);
    let r = solve(&s, a.solve.options())?;
    let mut out = summary(&s, &r);
    if let Some(dir) = &a.out {
        let bundle = ReportBundle::from_result(&r);
        for path in report::emit_tables(&bundle, a.format, dir)? {
            let _ = writeln!(out, "wrote {}", path.display());
        }
    }
    Ok(out)
}

fn validate(spec: &str) -> CliResult {
    let s = match resolve_scenario(spec) {
        Ok(s) => s,
        Err(drgame::ScenarioError::Invalid(issues)) => {
            let lines: Vec<String> = issues.iter().map(|i| format!("  {i}")).collect();
            return Err(Failure(format!(
                "{spec}: {} problem(s)\n{}",
                issues.len(),
                lines.join("\n")
            )));
        }
        Err(e) => return Err(Failure(format!("{spec}: {e}"))),
    };
    // Presets bypass the loader, so check them here too.
    let issues = validate_scenario(&s);
    if !issues.is_empty() {
        return Err(drgame::Error::InvalidScenario(issues).into());
    }
    Ok(format!(
        "ok: {} ({} intervals, {} programs, {} end users)\n",
        s.name,
        s.time_grid.len(),
        s.programs.len(),
        s.eus.len()
    ))
}

fn oracle(a: OracleArgs) -> CliResult {
    let mut s = load(&a.scenario)?;
    a.solve.apply(&mut s);
    if let Some(n) = a.points {
        s.algorithm.oracle_grid_points = n;
    }
    let opts = a.solve.options();
    let solved = solve(&s, opts)?;
    let mut grid_s = s.clone();
    grid_s.algorithm.mode = SearchMode::Grid;
    let grid = solve(&grid_s, opts)?;

    let mut out = String::new();
    let mut ok = true;
    let keys = report::interval_keys(&solved.intervals);
    for ((iv, gv), key) in solved.intervals.iter().zip(&grid.intervals).zip(&keys) {
        let gap = gv.uc_profit - iv.uc_profit;
        let fmt_prices = |p: &[f64]| {
            p.iter()
                .map(|&v| report::format_number(v))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(
            out,
            "interval {key}: {} [{}] profit {} | grid [{}] profit {} | gap {}",
            solved.mode,
            fmt_prices(&iv.lambda_dr),
            report::format_number(iv.uc_profit),
            fmt_prices(&gv.lambda_dr),
            report::format_number(gv.uc_profit),
            report::format_number(gap)
        );
        // The grid is exhaustive over the same axes, so it can never lose.
        if gap < -1e-9 * gv.uc_profit.abs().max(1.0) {
            ok = false;
            let _ = writeln!(out, "  grid oracle below solver");
        }
    }

    let n = s.algorithm.oracle_grid_points;
    let mut worst = 0.0_f64;
    let mut worst_id = String::new();
    for iv in &solved.intervals {
        for pr in &iv.program_responses {
            for r in &pr.eu_responses {
                if r.p_max == 0.0 {
                    continue;
                }
                let brute = eu::brute_force_best_response(pr.lambda_dr * r.duration, r.p_max, n)?;
                let rel = (brute - r.p_dr).abs() / r.p_max;
                if rel > worst {
                    worst = rel;
                    worst_id = format!("{} at {}", r.eu_id, iv.label);
                }
            }
        }
    }
    let bound = 1.0 / n as f64 + 1e-8;
    let _ = writeln!(
        out,
        "best responses: max |brute - solver| / p_max = {}{} (bound {})",
        report::format_number(worst),
        if worst_id.is_empty() {
            String::new()
        } else {
            format!(" ({worst_id})")
        },
        report::format_number(bound)
    );
    if worst > bound {
        ok = false;
    }
    if ok {
        out.push_str("oracle: ok\n");
        Ok(out)
    } else {
        Err(Failure(format!("oracle disagreement\n{out}")))
    }
}

fn compare(a: CompareArgs) -> CliResult {
    let mut s1 = load(&a.before)?;
    let mut s2 = load(&a.after)?;
    a.solve.apply(&mut s1);
    a.solve.apply(&mut s2);
    let opts = a.solve.options();
    let r1 = solve(&s1, opts)?;
    let r2 = solve(&s2, opts)?;
    let cmp = report::compare_results(&s1, &r1, &s2, &r2)?;
    let mut out = cmp.to_text();
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)
            .map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        let table = cmp.to_table().write(a.format, dir)?;
        let series = report::emit_series(&[r1, r2], a.format, dir)?;
        for path in [table, series] {
            let _ = writeln!(out, "wrote {}", path.display());
        }
    }
    Ok(out)
}

fn export(spec: &str, out: Option<&Path>) -> CliResult {
    let s = load(spec)?;
    let text = save_scenario(&s)?;
    match out {
        Some(path) => {
            std::fs::write(path, &text)
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            Ok(format!("wrote {}\n", path.display()))
        }
        None => Ok(text),
    }
}
