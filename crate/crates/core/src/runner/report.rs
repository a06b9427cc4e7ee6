//! Comparison tables and method deltas.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunnerError;
use crate::score::{MatchMode, ScoreReport};

/// A percentage held as integer hundredths, so `42.33` is `Hundredths(4233)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hundredths(pub i64);

impl Hundredths {
    /// Rounds a fraction in `[0, 1]` to hundredths of a percent, half-up.
    pub fn from_fraction(x: f64) -> Self {
        Self::from_percent(x * 100.0)
    }

    /// Rounds a percentage to two decimals, half-up.
    pub fn from_percent(p: f64) -> Self {
        // The epsilon absorbs binary representation error such as
        // 42.33 * 100 = 4232.999...
        Hundredths((p * 100.0 + 0.5 + 1e-7).floor() as i64)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Hundredths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl Serialize for Hundredths {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Hundredths {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(Hundredths::from_percent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: String,
    pub baseline: Hundredths,
    pub treatment: Hundredths,
    pub delta: Hundredths,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub dataset: String,
    pub match_mode: MatchMode,
    pub baseline: String,
    pub treatment: String,
    pub rows: Vec<DeltaRow>,
}

impl DeltaTable {
    pub fn row(&self, metric: &str) -> Option<&DeltaRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

fn run_label(r: &ScoreReport) -> String {
    format!("{} / {}", r.model, r.strategy)
}

/// Arg-I and Arg-C F1 deltas (treatment minus baseline) in percentage points.
pub fn compare_reports(baseline: &ScoreReport, treatment: &ScoreReport) -> Result<DeltaTable, RunnerError> {
    if baseline.dataset != treatment.dataset {
        return Err(RunnerError::Comparison(format!(
            "datasets differ: {} vs {}",
            baseline.dataset, treatment.dataset
        )));
    }
    if baseline.match_mode != treatment.match_mode {
        return Err(RunnerError::Comparison(format!(
            "match modes differ: {} vs {}",
            baseline.match_mode, treatment.match_mode
        )));
    }
    let row = |metric: &str, b: f64, t: f64| {
        let (b, t) = (Hundredths::from_fraction(b), Hundredths::from_fraction(t));
        DeltaRow { metric: metric.into(), baseline: b, treatment: t, delta: Hundredths(t.0 - b.0) }
    };
    Ok(DeltaTable {
        dataset: baseline.dataset.clone(),
        match_mode: baseline.match_mode,
        baseline: run_label(baseline),
        treatment: run_label(treatment),
        rows: vec![
            row("Arg-I F1", baseline.arg_i.f1, treatment.arg_i.f1),
            row("Arg-C F1", baseline.arg_c.f1, treatment.arg_c.f1),
        ],
    })
}

pub fn render_delta_table(table: &DeltaTable) -> String {
    let mut out = format!(
        "Dataset: {}\nMatch mode: {}\nBaseline: {}\nTreatment: {}\n\n| Metric | Baseline | Treatment | Delta |\n|---|---:|---:|---:|\n",
        table.dataset, table.match_mode, table.baseline, table.treatment
    );
    for r in &table.rows {
        let sign = if r.delta.0 > 0 { "+" } else { "" };
        out.push_str(&format!("| {} | {} | {} | {sign}{} |\n", r.metric, r.baseline, r.treatment, r.delta));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ArgI,
    ArgC,
}

impl Metric {
    fn label(self) -> &'static str {
        match self {
            Metric::ArgI => "Arg-I",
            Metric::ArgC => "Arg-C",
        }
    }
}

/// A published score quoted verbatim; never recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineLiteral {
    #[serde(default)]
    pub group: Option<String>,
    pub name: String,
    pub dataset: String,
    pub metric: Metric,
    /// Percentage, e.g. `10.51`.
    pub value: f64,
    pub source: String,
}

const BUILTIN_BASELINES: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/baselines.json"));

/// Supervised-system scores shipped with the crate.
pub fn builtin_baselines() -> Vec<BaselineLiteral> {
    serde_json::from_str(BUILTIN_BASELINES).expect("embedded baselines are valid")
}

pub fn load_baselines(path: impl AsRef<Path>) -> Result<Vec<BaselineLiteral>, RunnerError> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
    serde_json::from_str(&json).map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?} (expected md or csv)")),
        }
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn build_table(reports: &[ScoreReport], baselines: &[BaselineLiteral]) -> Table {
    let mut datasets: Vec<String> = Vec::new();
    for d in reports.iter().map(|r| &r.dataset).chain(baselines.iter().map(|b| &b.dataset)) {
        if !datasets.contains(d) {
            datasets.push(d.clone());
        }
    }
    let columns: Vec<(String, Metric)> = datasets
        .iter()
        .flat_map(|d| [(d.clone(), Metric::ArgI), (d.clone(), Metric::ArgC)])
        .collect();

    let mut header = vec!["Model".to_string(), "Strategy".to_string()];
    header.extend(columns.iter().map(|(d, m)| format!("{d} {}", m.label())));

    let mut rows = Vec::new();
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in reports {
        let k = (r.model.clone(), r.strategy.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (model, strategy) in &keys {
        let mut row = vec![model.clone(), strategy.clone()];
        for (dataset, metric) in &columns {
            // Later reports for the same cell win.
            let cell = reports
                .iter()
                .rev()
                .find(|r| &r.model == model && &r.strategy == strategy && &r.dataset == dataset)
                .map(|r| {
                    let f1 = match metric {
                        Metric::ArgI => r.arg_i.f1,
                        Metric::ArgC => r.arg_c.f1,
                    };
                    Hundredths::from_fraction(f1).to_string()
                })
                .unwrap_or_default();
            row.push(cell);
        }
        rows.push(row);
    }

    let mut names: Vec<&str> = Vec::new();
    for b in baselines {
        if !names.contains(&b.name.as_str()) {
            names.push(&b.name);
        }
    }
    for name in names {
        let group = baselines.iter().find(|b| b.name == name).and_then(|b| b.group.clone());
        let mut row = vec![name.to_string(), group.map_or("reported".into(), |g| format!("{g} (reported)"))];
        for (dataset, metric) in &columns {
            let cell = baselines
                .iter()
                .find(|b| b.name == name && &b.dataset == dataset && b.metric == *metric)
                .map(|b| format!("{:.2}", b.value))
                .unwrap_or_default();
            row.push(cell);
        }
        rows.push(row);
    }
    Table { header, rows }
}

fn mode_line(reports: &[ScoreReport]) -> String {
    let modes: BTreeSet<String> = reports.iter().map(|r| r.match_mode.to_string()).collect();
    match modes.len() {
        0 => "n/a".into(),
        1 => modes.into_iter().next().unwrap(),
        _ => format!("MIXED ({})", modes.into_iter().collect::<Vec<_>>().join(", ")),
    }
}

/// One row per (model, strategy), one column per (dataset, metric). F1 is
/// shown as a percentage with two decimals.
pub fn render_report(reports: &[ScoreReport], baselines: &[BaselineLiteral], format: ReportFormat) -> String {
    let table = build_table(reports, baselines);
    match format {
        ReportFormat::Markdown => {
            let mut out = format!("Match mode: {}\n\n", mode_line(reports));
            let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
            out.push_str(&line(&table.header));
            let mut sep = vec!["---".to_string(), "---".to_string()];
            sep.extend((2..table.header.len()).map(|_| "---:".to_string()));
            out.push_str(&line(&sep));
            for row in &table.rows {
                out.push_str(&line(row));
            }
            let quoted: Vec<&BaselineLiteral> = baselines.iter().collect();
            if !quoted.is_empty() {
                out.push_str("\nReported baselines are quoted as published, not recomputed:\n");
                let mut seen = BTreeSet::new();
                for b in quoted {
                    if seen.insert((&b.name, &b.source)) {
                        out.push_str(&format!("- {}: {}\n", b.name, b.source));
                    }
                }
            }
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
            let mut header = table.header.clone();
            header.insert(2, "Match mode".into());
            w.write_record(&header).expect("in-memory write");
            let n_runs = table.rows.len() - baselines_rows(baselines);
            for (i, row) in table.rows.iter().enumerate() {
                let mut row = row.clone();
                let mode = if i < n_runs {
                    let (model, strategy) = (&row[0], &row[1]);
                    reports
                        .iter()
                        .rev()
                        .find(|r| &r.model == model && &r.strategy == strategy)
                        .map(|r| r.match_mode.to_string())
                        .unwrap_or_default()
                } else {
                    String::new()
                };
                row.insert(2, mode);
                w.write_record(&row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
        }
    }
}

fn baselines_rows(baselines: &[BaselineLiteral]) -> usize {
    baselines.iter().map(|b| &b.name).collect::<BTreeSet<_>>().len()
}
