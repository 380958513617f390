//! Tables, plotting series and scenario comparisons projected from solved
//! events. Emitters only select and format fields; they never re-solve.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::model::Scenario;
use crate::search::EquilibriumResult;
use crate::utility::UcIntervalResult;

/// Relative deadband under which a comparison reports no change.
pub const DIRECTION_DEADBAND: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot write {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("non-finite value in {table}, row {row}, column {column}")]
    NonFinite {
        table: String,
        row: usize,
        column: String,
    },
    #[error("results are not comparable: {0}")]
    Mismatch(String),
    #[error("no results to emit")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// Renders `v` with six significant digits, rounding ties to even. Fixed
/// notation is used for decimal exponents in `[-4, 5]`, scientific otherwise;
/// trailing zeros are dropped.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..=5).contains(&exp) {
        let fixed = format!("{:.*}", (5 - exp) as usize, v);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(v) => format_number(*v),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Text(s) => serde_json::Value::String(s.clone()),
            Cell::Num(v) => {
                // The structured form carries exactly the digits of the text form.
                let parsed: f64 = format_number(*v).parse().expect("formatted number");
                serde_json::Number::from_f64(parsed)
                    .map(serde_json::Value::Number)
                    .unwrap_or(serde_json::Value::Null)
            }
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(name: &str, columns: Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    fn check_finite(&self) -> Result<(), ReportError> {
        for (i, row) in self.rows.iter().enumerate() {
            for (cell, column) in row.iter().zip(&self.columns) {
                if let Cell::Num(v) = cell {
                    if !v.is_finite() {
                        return Err(ReportError::NonFinite {
                            table: self.name.clone(),
                            row: i,
                            column: column.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String, ReportError> {
        self.check_finite()?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let err = |e: csv::Error| ReportError::Io {
            path: PathBuf::from(&self.name),
            message: e.to_string(),
        };
        w.write_record(&self.columns).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| ReportError::Io {
            path: PathBuf::from(&self.name),
            message: e.to_string(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// `{"columns": [...], "rows": [[...], ...]}`, keeping column order.
    pub fn to_json(&self) -> Result<String, ReportError> {
        self.check_finite()?;
        let rows: Vec<Vec<serde_json::Value>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(Cell::json).collect())
            .collect();
        let doc = serde_json::json!({ "columns": self.columns, "rows": rows });
        let mut out = serde_json::to_string_pretty(&doc).expect("json serialization");
        out.push('\n');
        Ok(out)
    }

    pub fn render(&self, format: Format) -> Result<String, ReportError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    pub fn write(&self, format: Format, dir: &Path) -> Result<PathBuf, ReportError> {
        let text = self.render(format)?;
        let path = dir.join(format!("{}.{}", self.name, format.extension()));
        fs::write(&path, text).map_err(|e| ReportError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        Ok(path)
    }
}

/// Column keys for intervals: the label, or `label_t` when labels repeat.
pub fn interval_keys(intervals: &[UcIntervalResult]) -> Vec<String> {
    let labels: Vec<&str> = intervals.iter().map(|iv| iv.label.as_str()).collect();
    let unique = labels.iter().collect::<HashSet<_>>().len() == labels.len();
    labels
        .iter()
        .enumerate()
        .map(|(t, l)| {
            if unique {
                l.to_string()
            } else {
                format!("{l}_{t}")
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    /// `eu_id`, DR per interval, then `lambda_eu` per interval.
    pub eu_table: Table,
    /// `program`, then `lambda_dr` per interval.
    pub provider_table: Table,
    /// Long-format plotting series.
    pub series: Table,
    /// Largest absolute residuals per end user over all intervals.
    pub kkt_report: Table,
}

impl ReportBundle {
    pub fn from_result(r: &EquilibriumResult) -> Self {
        let keys = interval_keys(&r.intervals);

        let mut eu_cols = vec!["eu_id".to_string()];
        eu_cols.extend(keys.iter().map(|k| format!("dr_{k}")));
        eu_cols.extend(keys.iter().map(|k| format!("lambda_eu_{k}")));
        let mut eu_table = Table::new("eu_table", eu_cols);

        let mut provider_cols = vec!["program".to_string()];
        provider_cols.extend(keys.iter().map(|k| format!("lambda_dr_{k}")));
        let mut provider_table = Table::new("provider_table", provider_cols);

        if let Some(first) = r.intervals.first() {
            for (i, pr) in first.program_responses.iter().enumerate() {
                let mut row: Vec<Cell> = vec![pr.program_id.as_str().into()];
                row.extend(r.intervals.iter().map(|iv| Cell::Num(iv.lambda_dr[i])));
                provider_table.rows.push(row);

                for (j, eu) in pr.eu_responses.iter().enumerate() {
                    let at = |iv: &UcIntervalResult, lambda: bool| {
                        let e = &iv.program_responses[i].eu_responses[j];
                        Cell::Num(if lambda { e.lambda_eu } else { e.p_dr })
                    };
                    let mut row: Vec<Cell> = vec![eu.eu_id.as_str().into()];
                    row.extend(r.intervals.iter().map(|iv| at(iv, false)));
                    row.extend(r.intervals.iter().map(|iv| at(iv, true)));
                    eu_table.rows.push(row);
                }
            }
        }

        let mut kkt_report = Table::new(
            "kkt_report",
            [
                "eu_id",
                "stationarity",
                "complementarity",
                "bound_violation",
                "price_bound_violation",
                "max_residual",
            ]
            .map(String::from)
            .to_vec(),
        );
        let mut order: Vec<&str> = Vec::new();
        let mut worst: Vec<[f64; 5]> = Vec::new();
        for k in &r.kkt {
            let pos = match order.iter().position(|id| *id == k.eu_id) {
                Some(p) => p,
                None => {
                    order.push(&k.eu_id);
                    worst.push([0.0; 5]);
                    order.len() - 1
                }
            };
            let vals = [
                k.stationarity.abs(),
                k.complementarity_lower
                    .abs()
                    .max(k.complementarity_upper.abs()),
                k.bound_violation,
                k.price_bound_violation,
                k.max_residual(),
            ];
            for (w, v) in worst[pos].iter_mut().zip(vals) {
                *w = w.max(v);
            }
        }
        for (id, w) in order.iter().zip(&worst) {
            let mut row: Vec<Cell> = vec![(*id).into()];
            row.extend(w.iter().map(|&v| Cell::Num(v)));
            kkt_report.rows.push(row);
        }

        Self {
            eu_table,
            provider_table,
            series: series_table(std::slice::from_ref(r)),
            kkt_report,
        }
    }

    pub fn tables(&self) -> [&Table; 4] {
        [
            &self.eu_table,
            &self.provider_table,
            &self.series,
            &self.kkt_report,
        ]
    }
}

/// Long-format series: one row per (scenario, interval, entity, metric).
pub fn series_table(results: &[EquilibriumResult]) -> Table {
    let mut table = Table::new(
        "series",
        ["scenario", "interval", "entity", "id", "metric", "value"]
            .map(String::from)
            .to_vec(),
    );
    for r in results {
        let keys = interval_keys(&r.intervals);
        for (iv, key) in r.intervals.iter().zip(&keys) {
            let mut push = |entity: &str, id: &str, metric: &str, value: f64| {
                table.rows.push(vec![
                    r.scenario.as_str().into(),
                    key.as_str().into(),
                    entity.into(),
                    id.into(),
                    metric.into(),
                    value.into(),
                ]);
            };
            for pr in &iv.program_responses {
                for eu in &pr.eu_responses {
                    push("eu", &eu.eu_id, "p_dr", eu.p_dr);
                    push("eu", &eu.eu_id, "eu_profit", eu.eu_profit);
                }
            }
            for pr in &iv.program_responses {
                push("program", &pr.program_id, "aggregate_dr", pr.aggregate_dr);
                push("program", &pr.program_id, "lambda_dr", pr.lambda_dr);
                push(
                    "program",
                    &pr.program_id,
                    "provider_profit",
                    pr.provider_profit,
                );
            }
            push("utility", "uc", "uc_profit", iv.uc_profit);
        }
    }
    table
}

fn ensure_dir(dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(|e| ReportError::Io {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes the four tables of `bundle` into `dir`.
pub fn emit_tables(
    bundle: &ReportBundle,
    format: Format,
    dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    ensure_dir(dir)?;
    bundle
        .tables()
        .iter()
        .map(|t| t.write(format, dir))
        .collect()
}

/// Writes the combined series of several results into `dir`.
pub fn emit_series(
    results: &[EquilibriumResult],
    format: Format,
    dir: &Path,
) -> Result<PathBuf, ReportError> {
    if results.is_empty() {
        return Err(ReportError::Empty);
    }
    ensure_dir(dir)?;
    series_table(results).write(format, dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
    Unchanged,
}

impl Direction {
    pub fn between(before: f64, after: f64) -> Self {
        let band = DIRECTION_DEADBAND * before.abs().max(after.abs()).max(1.0);
        if after - before > band {
            Direction::Increase
        } else if before - after > band {
            Direction::Decrease
        } else {
            Direction::Unchanged
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
            Direction::Unchanged => "unchanged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Change {
    pub before: f64,
    pub after: f64,
    pub direction: Direction,
}

impl Change {
    pub fn new(before: f64, after: f64) -> Self {
        Self {
            before,
            after,
            direction: Direction::between(before, after),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EuChange {
    pub eu_id: String,
    pub program_id: String,
    pub interval: String,
    pub willingness_changed: bool,
    pub p_dr: Change,
    pub eu_profit: Change,
    pub lambda_eu: Change,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgramChange {
    pub program_id: String,
    pub interval: String,
    pub aggregate_dr: Change,
    pub lambda_dr: Change,
    pub provider_profit: Change,
}

/// Direction-only comparison of two solves of structurally equal scenarios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub before: String,
    pub after: String,
    /// End users whose willingness differs, in scenario order.
    pub changed_eus: Vec<String>,
    pub eus: Vec<EuChange>,
    pub programs: Vec<ProgramChange>,
    pub uc_profit_by_interval: Vec<(String, Change)>,
    pub uc_profit: Change,
}

impl ComparisonReport {
    pub fn eu(&self, eu_id: &str, interval: &str) -> Option<&EuChange> {
        self.eus
            .iter()
            .find(|e| e.eu_id == eu_id && e.interval == interval)
    }

    pub fn program(&self, program_id: &str, interval: &str) -> Option<&ProgramChange> {
        self.programs
            .iter()
            .find(|p| p.program_id == program_id && p.interval == interval)
    }

    /// One `kind id interval metric direction (before -> after)` line per fact.
    pub fn to_text(&self) -> String {
        let mut out = format!("compare {} -> {}\n", self.before, self.after);
        out.push_str(&format!(
            "willingness changed: {}\n",
            if self.changed_eus.is_empty() {
                "none".to_string()
            } else {
                self.changed_eus.join(", ")
            }
        ));
        let line = |out: &mut String, head: &str, metric: &str, c: &Change| {
            out.push_str(&format!(
                "{head} {metric} {} ({} -> {})\n",
                c.direction.as_str(),
                format_number(c.before),
                format_number(c.after)
            ));
        };
        for e in &self.eus {
            let head = format!("eu {} {}", e.eu_id, e.interval);
            line(&mut out, &head, "p_dr", &e.p_dr);
            line(&mut out, &head, "eu_profit", &e.eu_profit);
            line(&mut out, &head, "lambda_eu", &e.lambda_eu);
        }
        for p in &self.programs {
            let head = format!("program {} {}", p.program_id, p.interval);
            line(&mut out, &head, "aggregate_dr", &p.aggregate_dr);
            line(&mut out, &head, "lambda_dr", &p.lambda_dr);
            line(&mut out, &head, "provider_profit", &p.provider_profit);
        }
        for (key, c) in &self.uc_profit_by_interval {
            line(&mut out, &format!("utility uc {key}"), "uc_profit", c);
        }
        line(&mut out, "utility uc total", "uc_profit", &self.uc_profit);
        out
    }

    /// Long-format table of every compared metric.
    pub fn to_table(&self) -> Table {
        let mut table = Table::new(
            "comparison",
            [
                "entity",
                "id",
                "interval",
                "metric",
                "before",
                "after",
                "direction",
            ]
            .map(String::from)
            .to_vec(),
        );
        let mut push = |entity: &str, id: &str, interval: &str, metric: &str, c: &Change| {
            table.rows.push(vec![
                entity.into(),
                id.into(),
                interval.into(),
                metric.into(),
                c.before.into(),
                c.after.into(),
                c.direction.as_str().into(),
            ]);
        };
        for e in &self.eus {
            push("eu", &e.eu_id, &e.interval, "p_dr", &e.p_dr);
            push("eu", &e.eu_id, &e.interval, "eu_profit", &e.eu_profit);
            push("eu", &e.eu_id, &e.interval, "lambda_eu", &e.lambda_eu);
        }
        for p in &self.programs {
            push(
                "program",
                &p.program_id,
                &p.interval,
                "aggregate_dr",
                &p.aggregate_dr,
            );
            push(
                "program",
                &p.program_id,
                &p.interval,
                "lambda_dr",
                &p.lambda_dr,
            );
            push(
                "program",
                &p.program_id,
                &p.interval,
                "provider_profit",
                &p.provider_profit,
            );
        }
        for (key, c) in &self.uc_profit_by_interval {
            push("utility", "uc", key, "uc_profit", c);
        }
        push("utility", "uc", "total", "uc_profit", &self.uc_profit);
        table
    }
}

/// Compares two solved scenarios that share programs, members and intervals.
pub fn compare_results(
    s1: &Scenario,
    r1: &EquilibriumResult,
    s2: &Scenario,
    r2: &EquilibriumResult,
) -> Result<ComparisonReport, ReportError> {
    let mismatch = |what: String| Err(ReportError::Mismatch(what));
    if r1.intervals.len() != r2.intervals.len() {
        return mismatch(format!(
            "{} intervals vs {}",
            r1.intervals.len(),
            r2.intervals.len()
        ));
    }
    let keys = interval_keys(&r1.intervals);
    if keys != interval_keys(&r2.intervals) {
        return mismatch("interval labels differ".to_string());
    }

    let mut changed_eus = Vec::new();
    for e1 in &s1.eus {
        match s2.eu(&e1.id) {
            Some(e2) if e2.program_id == e1.program_id => {
                if e2.willingness != e1.willingness {
                    changed_eus.push(e1.id.clone());
                }
            }
            Some(_) => return mismatch(format!("end user {} moved program", e1.id)),
            None => return mismatch(format!("end user {} missing from {}", e1.id, s2.name)),
        }
    }
    if s1.eus.len() != s2.eus.len() {
        return mismatch("end-user sets differ".to_string());
    }

    let mut eus = Vec::new();
    let mut programs = Vec::new();
    let mut uc_profit_by_interval = Vec::new();
    for ((a, b), key) in r1.intervals.iter().zip(&r2.intervals).zip(&keys) {
        if a.program_responses.len() != b.program_responses.len() {
            return mismatch("program sets differ".to_string());
        }
        for (pa, pb) in a.program_responses.iter().zip(&b.program_responses) {
            if pa.program_id != pb.program_id || pa.eu_responses.len() != pb.eu_responses.len() {
                return mismatch(format!("program {} differs", pa.program_id));
            }
            for (ea, eb) in pa.eu_responses.iter().zip(&pb.eu_responses) {
                if ea.eu_id != eb.eu_id {
                    return mismatch(format!("member order differs at {}", ea.eu_id));
                }
                eus.push(EuChange {
                    eu_id: ea.eu_id.clone(),
                    program_id: pa.program_id.clone(),
                    interval: key.clone(),
                    willingness_changed: changed_eus.contains(&ea.eu_id),
                    p_dr: Change::new(ea.p_dr, eb.p_dr),
                    eu_profit: Change::new(ea.eu_profit, eb.eu_profit),
                    lambda_eu: Change::new(ea.lambda_eu, eb.lambda_eu),
                });
            }
            programs.push(ProgramChange {
                program_id: pa.program_id.clone(),
                interval: key.clone(),
                aggregate_dr: Change::new(pa.aggregate_dr, pb.aggregate_dr),
                lambda_dr: Change::new(pa.lambda_dr, pb.lambda_dr),
                provider_profit: Change::new(pa.provider_profit, pb.provider_profit),
            });
        }
        uc_profit_by_interval.push((key.clone(), Change::new(a.uc_profit, b.uc_profit)));
    }

    Ok(ComparisonReport {
        before: r1.scenario.clone(),
        after: r2.scenario.clone(),
        changed_eus,
        eus,
        programs,
        uc_profit_by_interval,
        uc_profit: Change::new(r1.uc_profit, r2.uc_profit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(4.47), "4.47");
        assert_eq!(format_number(1.0 / 3.0), "0.333333");
        assert_eq!(format_number(2.0 / 3.0), "0.666667");
        assert_eq!(format_number(89_174.123_456), "89174.1");
        assert_eq!(format_number(123_456.7), "123457");
        assert_eq!(format_number(999_999.5), "1e6");
        assert_eq!(format_number(1_234_567.0), "1.23457e6");
        assert_eq!(format_number(0.000_123_456_78), "0.000123457");
        assert_eq!(format_number(0.000_012_345_67), "1.23457e-5");
        assert_eq!(format_number(-5.716_712_392), "-5.71671");
        assert_eq!(format_number(100.0), "100");
    }

    #[test]
    fn ties_round_to_even() {
        // Exactly representable halfway cases.
        assert_eq!(format_number(1_234_565.0), "1.23456e6");
        assert_eq!(format_number(1_234_575.0), "1.23458e6");
        assert_eq!(format_number(0.125), "0.125");
        assert_eq!(format_number(2.000_002_5 * 4.0), "8.00001");
    }

    #[test]
    fn directions_use_deadband() {
        assert_eq!(Direction::between(1.0, 1.0 + 1e-12), Direction::Unchanged);
        assert_eq!(Direction::between(1.0, 1.0 + 1e-6), Direction::Increase);
        assert_eq!(Direction::between(1e6, 1e6 - 1e-4), Direction::Unchanged);
        assert_eq!(Direction::between(5.0, 4.0), Direction::Decrease);
    }

    #[test]
    fn csv_and_json_rendering() {
        let mut t = Table::new("t", vec!["id".into(), "v".into()]);
        t.rows.push(vec!["a,b".into(), 1.0_f64.into()]);
        t.rows.push(vec!["c".into(), (1.0_f64 / 3.0).into()]);
        assert_eq!(t.to_csv().unwrap(), "id,v\n\"a,b\",1\nc,0.333333\n");
        let json: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert_eq!(json["columns"][1], "v");
        assert_eq!(json["rows"][1][1].as_f64().unwrap(), 0.333333);

        t.rows.push(vec!["d".into(), f64::NAN.into()]);
        assert!(matches!(
            t.to_csv(),
            Err(ReportError::NonFinite { row: 2, .. })
        ));
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new("t", vec!["eu_id".into()]);
        assert_eq!(t.to_csv().unwrap(), "eu_id\n");
    }
}
