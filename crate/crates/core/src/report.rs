//! Metrics emission: JSON, CSV and plot data for the data-amount sweep.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiment::{ConditionResult, MetricsReport, Timing};

pub const JSON_FILE: &str = "metrics.json";
pub const CSV_FILE: &str = "metrics.csv";
pub const PLOT_FILE: &str = "plotdata.tsv";
pub const TIMING_FILE: &str = "timing.json";

/// CSV columns, in order.
pub const CSV_COLUMNS: [&str; 14] = [
    "condition",
    "test_set",
    "method",
    "criterion",
    "supervision",
    "selection_rate",
    "adaptation_utterances",
    "sat",
    "ter",
    "substitutions",
    "insertions",
    "deletions",
    "reference_tokens",
    "relative_reduction",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Plotdata,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Plotdata];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Json => JSON_FILE,
            ReportFormat::Csv => CSV_FILE,
            ReportFormat::Plotdata => PLOT_FILE,
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "plotdata" => Ok(ReportFormat::Plotdata),
            _ => Err(Error::InvalidArgument(format!("unknown report format {s:?} (json|csv|plotdata)"))),
        }
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), ToString::to_string)
}

fn all_rows(report: &MetricsReport) -> impl Iterator<Item = &ConditionResult> {
    report.conditions.iter().chain(&report.sweep)
}

pub fn render_json(report: &MetricsReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// One row per evaluated condition and test set, sweep points included.
pub fn render_csv(report: &MetricsReport) -> String {
    let mut s = CSV_COLUMNS.join(",");
    s.push('\n');
    for r in all_rows(report) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.name,
            r.test_set,
            r.method,
            opt(&r.criterion),
            opt(&r.supervision),
            opt(&r.selection_rate),
            opt(&r.adaptation_utterances),
            r.sat,
            r.ter,
            r.substitutions,
            r.insertions,
            r.deletions,
            r.reference_tokens,
            opt(&r.relative_reduction),
        );
    }
    s
}

/// Series name of a condition: its name without the utterance-count part.
pub fn series_name(name: &str) -> String {
    let parts: Vec<&str> = name
        .split('-')
        .filter(|p| !(p.len() > 1 && p.starts_with('n') && p[1..].bytes().all(|b| b.is_ascii_digit())))
        .collect();
    parts.join("-")
}

/// `series<TAB>adaptation_utterances<TAB>ter`, sorted by series then count.
/// Only conditions with a bounded adaptation-utterance count appear.
pub fn render_plotdata(report: &MetricsReport) -> String {
    let mut points: Vec<(String, usize, f64)> = all_rows(report)
        .filter_map(|r| r.adaptation_utterances.map(|n| (series_name(&r.name), n, r.ter)))
        .collect();
    points.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    points.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    let mut s = String::from("series\tadaptation_utterances\tter\n");
    for (series, n, ter) in points {
        let _ = writeln!(s, "{series}\t{n}\t{ter}");
    }
    s
}

pub fn render(report: &MetricsReport, format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Json => render_json(report)?,
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Plotdata => render_plotdata(report),
    })
}

/// Writes each requested format into `dir`; returns the written paths.
pub fn emit_report(report: &MetricsReport, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for &f in formats {
        let path = dir.join(f.file_name());
        std::fs::write(&path, render(report, f)?)?;
        out.push(path);
    }
    Ok(out)
}

pub fn write_timing(timing: &Timing, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(TIMING_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(timing)? + "\n")?;
    Ok(path)
}

pub fn read_json(path: &Path) -> Result<MetricsReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}
