//! Machine-readable reports. JSON is the single source of truth; the text
//! table for replication runs is rendered from the same structures.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use copulasurv_core::simulation::MethodSummary;
use copulasurv_core::{Dataset, Family, FitReport, Method, SeMethod};
use serde::Serialize;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub score_norm: Option<f64>,
    pub hessian_negative_definite: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOutput {
    pub schema_version: u32,
    pub method: Method,
    pub copula: Family,
    pub estimates: BTreeMap<String, f64>,
    pub standard_errors: BTreeMap<String, f64>,
    /// exp(beta) for every regression coefficient.
    pub hazard_ratios: BTreeMap<String, f64>,
    pub se_method: Option<SeMethod>,
    pub loglik: Option<f64>,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub n_clusters: usize,
    pub n_subjects: usize,
    pub events: usize,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub resolved_config: RunConfig,
}

impl FitOutput {
    pub fn from_report(report: &FitReport, data: &Dataset, config: RunConfig) -> Self {
        FitOutput {
            schema_version: SCHEMA_VERSION,
            method: report.method,
            copula: report.family,
            estimates: report.estimates.clone(),
            standard_errors: report.standard_errors.clone(),
            hazard_ratios: report
                .estimates
                .iter()
                .filter(|(k, _)| k.starts_with("beta["))
                .map(|(k, v)| (k.clone(), v.exp()))
                .collect(),
            se_method: Some(report.se_method),
            loglik: Some(report.loglik),
            converged: report.converged,
            iterations: Some(report.iterations),
            n_clusters: data.n_clusters(),
            n_subjects: data.n_subjects(),
            events: data.n_events(),
            diagnostics: Diagnostics {
                score_norm: Some(report.score_norm),
                hessian_negative_definite: Some(report.hessian_negative_definite),
            },
            warnings: report.warnings.clone(),
            error: None,
            resolved_config: config,
        }
    }

    /// Report for a fit that stopped without converging.
    pub fn failed(method: Method, copula: Family, data: &Dataset, error: String, config: RunConfig) -> Self {
        FitOutput {
            schema_version: SCHEMA_VERSION,
            method,
            copula,
            estimates: BTreeMap::new(),
            standard_errors: BTreeMap::new(),
            hazard_ratios: BTreeMap::new(),
            se_method: None,
            loglik: None,
            converged: false,
            iterations: None,
            n_clusters: data.n_clusters(),
            n_subjects: data.n_subjects(),
            events: data.n_events(),
            diagnostics: Diagnostics { score_norm: None, hessian_negative_definite: None },
            warnings: vec![error.clone()],
            error: Some(error),
            resolved_config: config,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulatedFile {
    pub file: String,
    pub replicate: u64,
    pub clusters: usize,
    pub subjects: usize,
    pub events: usize,
    pub censoring_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateManifest {
    pub schema_version: u32,
    pub resolved_config: RunConfig,
    pub files: Vec<SimulatedFile>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub name: String,
    pub copula: Family,
    pub theta0: f64,
    pub clusters: usize,
    pub censoring_percent: Option<u32>,
    pub seed: u64,
    pub replicates: usize,
    pub mean_censoring_rate: Option<f64>,
    pub methods: Vec<MethodSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateReport {
    pub schema_version: u32,
    pub resolved_config: RunConfig,
    pub cells: Vec<CellReport>,
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) => format!("{x:.digits$}"),
        None => "NA".into(),
    }
}

fn method_cells(c: &CellReport, method: Method) -> [String; 3] {
    match c.methods.iter().find(|m| m.method == method) {
        Some(m) => [
            fmt_opt(m.mean_estimate, 3),
            format!(
                "({};{})",
                fmt_opt(m.mean_se, 3),
                m.coverage.map(|p| format!("{:.0}%", 100.0 * p)).unwrap_or_else(|| "NA".into())
            ),
            format!("sd {}", fmt_opt(m.empirical_sd, 3)),
        ],
        None if c.error.is_some() => ["failed".into(), String::new(), String::new()],
        None => [String::new(), String::new(), String::new()],
    }
}

/// Fixed-width rendering: one block per cluster count, censoring levels as column groups, and per
/// (copula, theta0) the mean estimates, `(mean SE;coverage)` and the
/// empirical SD of each method.
pub fn render_table(report: &ReplicateReport, methods: &[Method]) -> String {
    const W: usize = 13;
    let mut out = String::new();
    let mut ks: Vec<usize> = report.cells.iter().map(|c| c.clusters).collect();
    ks.sort_unstable();
    ks.dedup();
    for k in ks {
        let cells: Vec<&CellReport> = report.cells.iter().filter(|c| c.clusters == k).collect();
        let mut levels: Vec<Option<u32>> = Vec::new();
        let mut rows: Vec<(Family, f64)> = Vec::new();
        for c in &cells {
            if !levels.contains(&c.censoring_percent) {
                levels.push(c.censoring_percent);
            }
            if !rows.contains(&(c.copula, c.theta0)) {
                rows.push((c.copula, c.theta0));
            }
        }
        levels.sort_by_key(|l| l.map(|p| p as i64).unwrap_or(i64::MAX));
        let _ = writeln!(out, "K = {k}");
        let mut head = format!("{:<10}{:<8}", "", "");
        let mut sub = format!("{:<10}{:<8}", "copula", "theta0");
        for level in &levels {
            let label = match level {
                Some(p) => format!("{p}% censoring"),
                None => "other censoring".into(),
            };
            let _ = write!(head, "| {:<width$}", label, width = W * methods.len());
            sub.push_str("| ");
            for m in methods {
                let _ = write!(sub, "{:<W$}", m.name());
            }
        }
        let _ = writeln!(out, "{head}");
        let _ = writeln!(out, "{sub}");
        let _ = writeln!(out, "{}", "-".repeat(sub.len()));
        for (family, theta0) in rows {
            let mut lines = [
                format!("{:<10}{:<8}", family.name(), theta0),
                format!("{:<10}{:<8}", "", ""),
                format!("{:<10}{:<8}", "", ""),
            ];
            for level in &levels {
                let cell = cells.iter().find(|c| c.copula == family && c.theta0 == theta0 && c.censoring_percent == *level);
                for line in lines.iter_mut() {
                    line.push_str("| ");
                }
                for &m in methods {
                    let parts = cell.map(|c| method_cells(c, m)).unwrap_or_default();
                    for (line, part) in lines.iter_mut().zip(parts.iter()) {
                        let _ = write!(line, "{part:<W$}");
                    }
                }
            }
            for line in lines {
                let _ = writeln!(out, "{}", line.trim_end());
            }
        }
        out.push('\n');
    }
    for c in report.cells.iter().filter(|c| c.error.is_some()) {
        let _ = writeln!(out, "{}: {}", c.name, c.error.as_deref().unwrap_or_default());
    }
    out
}
