//! Comparison records and their JSON, CSV and markdown renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::uncertainty::Family;

use super::HarnessError;

/// Column order of the CSV rendering.
pub const REPORT_CSV_HEADER: &str = "solver,family,repeat,status,total_cost,end_soc,min_soc,soc_violations,\
wall_time_s,converged,iterations,scenario_hash,draw_hash,trajectory_file,learning_curve_file,error";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Grad,
    Sac,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Grad => "grad",
            Solver::Sac => "sac",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub solver: Solver,
    pub family: Family,
    pub repeat: usize,
    /// `None` on success.
    pub error: Option<String>,
    /// Dispatch cost in dollars.
    pub total_cost: Option<f64>,
    pub end_soc: Option<f64>,
    pub min_soc: Option<f64>,
    pub soc_violations: Option<usize>,
    pub wall_time_s: Option<f64>,
    /// Gradient solver only.
    pub converged: Option<bool>,
    /// Epochs (gradient) or environment steps (SAC).
    pub iterations: Option<usize>,
    pub scenario_hash: String,
    pub draw_hash: String,
    /// Relative to the report's directory.
    pub trajectory_file: Option<String>,
    pub learning_curve_file: Option<String>,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub solver: Solver,
    pub family: Family,
    pub runs: usize,
    pub mean_cost: f64,
    pub mean_end_soc: f64,
    pub mean_min_soc: f64,
    pub mean_wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario_label: String,
    pub seed: u64,
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl Report {
    pub fn new(scenario_label: impl Into<String>, seed: u64, records: Vec<RunRecord>) -> Self {
        let aggregates = aggregate(&records);
        Self { scenario_label: scenario_label.into(), seed, records, aggregates }
    }

    pub fn aggregate_for(&self, solver: Solver, family: Family) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.solver == solver && a.family == family)
    }
}

/// Means over successful runs, ordered by family then solver.
pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(usize, Solver), Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.succeeded()) {
        let fam_idx = Family::ALL.iter().position(|&f| f == r.family).unwrap_or(usize::MAX);
        groups.entry((fam_idx, r.solver)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&RunRecord) -> Option<f64>| rs.iter().filter_map(|r| f(r)).sum::<f64>() / n;
            Aggregate {
                solver: rs[0].solver,
                family: rs[0].family,
                runs: rs.len(),
                mean_cost: mean(&|r| r.total_cost),
                mean_end_soc: mean(&|r| r.end_soc),
                mean_min_soc: mean(&|r| r.min_soc),
                mean_wall_time_s: mean(&|r| r.wall_time_s),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(HarnessError::Config(format!("unknown report format `{s}`"))),
        }
    }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn opt_fixed(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

fn csv_text(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn render_csv(report: &Report) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in &report.records {
        let cells = [
            r.solver.name().to_string(),
            r.family.name().to_string(),
            r.repeat.to_string(),
            if r.succeeded() { "ok" } else { "failed" }.to_string(),
            opt_fixed(r.total_cost, 6),
            opt_fixed(r.end_soc, 9),
            opt_fixed(r.min_soc, 9),
            opt(&r.soc_violations),
            opt_fixed(r.wall_time_s, 3),
            opt(&r.converged),
            opt(&r.iterations),
            r.scenario_hash.clone(),
            r.draw_hash.clone(),
            csv_text(&opt(&r.trajectory_file)),
            csv_text(&opt(&r.learning_curve_file)),
            csv_text(&opt(&r.error)),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// One row per family; for each solver the mean cost, end SOC (percent)
/// and solve time.
pub fn render_markdown(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Scenario `{}`, seed {}\n", report.scenario_label, report.seed);
    out.push_str("| Uncertainty | Grad cost ($) | Grad end SOC (%) | Grad time (s) | SAC cost ($) | SAC end SOC (%) | SAC time (s) |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
    for fam in Family::ALL {
        let g = report.aggregate_for(Solver::Grad, fam);
        let s = report.aggregate_for(Solver::Sac, fam);
        if g.is_none() && s.is_none() {
            continue;
        }
        let cells = |a: Option<&Aggregate>| match a {
            Some(a) => format!("{:.2} | {:.1} | {:.2}", a.mean_cost, 100.0 * a.mean_end_soc, a.mean_wall_time_s),
            None => "- | - | -".to_string(),
        };
        let _ = writeln!(out, "| {} | {} | {} |", fam.name(), cells(g), cells(s));
    }
    let failed = report.records.iter().filter(|r| !r.succeeded()).count();
    if failed > 0 {
        let _ = writeln!(out, "\n{failed} run(s) failed; see the CSV or JSON report for details.");
    }
    out
}

pub fn render_report(report: &Report, format: ReportFormat) -> Result<String, HarnessError> {
    if report.records.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    Ok(match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => render_markdown(report),
    })
}

/// Writes the report to `path` in the given format.
pub fn emit_report(report: &Report, format: ReportFormat, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let text = render_report(report, format)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<Report, HarnessError> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}
