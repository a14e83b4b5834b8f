//! Built-in simulation cells and grid files.
//!
//! Cell names read `<copula>-<theta0>-k<K>-c<censoring %>`, for example
//! `clayton-0.5-k200-c0`. The groups `table-k50`, `table-k200` and `all`
//! expand to every cell with that number of clusters.

use std::path::Path;

use copulasurv_core::simulation::{Censoring, CovariateRule, SimulationConfig};
use copulasurv_core::{Family, WeibullMargin};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CENSORING_LEVELS: [(u32, Option<(f64, f64)>); 3] =
    [(0, None), (25, Some((0.0274, 1.5))), (50, Some((0.1464, 1.5)))];

pub const CLAYTON_THETAS: [f64; 4] = [0.2, 0.5, 1.0, 1.5];
pub const GUMBEL_THETAS: [f64; 3] = [0.2, 0.5, 0.8];
pub const CLUSTER_COUNTS: [usize; 2] = [50, 200];

/// One simulation cell: data-generating settings without seed or replicate
/// count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    #[serde(default)]
    pub name: Option<String>,
    pub copula: Family,
    pub theta: f64,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    #[serde(default = "default_size_min")]
    pub size_min: usize,
    #[serde(default = "default_size_max")]
    pub size_max: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub censor_lambda: Option<f64>,
    #[serde(default)]
    pub censor_rho: Option<f64>,
}

fn default_clusters() -> usize {
    200
}
fn default_size_min() -> usize {
    2
}
fn default_size_max() -> usize {
    50
}
fn default_lambda() -> f64 {
    0.0316
}
fn default_rho() -> f64 {
    1.5
}
fn default_beta() -> f64 {
    3.0
}

impl Cell {
    pub fn standard(copula: Family, theta: f64, clusters: usize, censoring_percent: u32) -> Result<Cell, CliError> {
        let censoring = CENSORING_LEVELS
            .iter()
            .find(|(p, _)| *p == censoring_percent)
            .ok_or_else(|| CliError::Input(format!("censoring level must be 0, 25 or 50 (got {censoring_percent})")))?
            .1;
        Ok(Cell {
            name: Some(format!("{copula}-{theta}-k{clusters}-c{censoring_percent}")),
            copula,
            theta,
            clusters,
            size_min: default_size_min(),
            size_max: default_size_max(),
            lambda: default_lambda(),
            rho: default_rho(),
            beta: default_beta(),
            censor_lambda: censoring.map(|c| c.0),
            censor_rho: censoring.map(|c| c.1),
        })
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let c = match self.censor_lambda {
                Some(l) => format!("lc{l}"),
                None => "c0".into(),
            };
            format!("{}-{}-k{}-{c}", self.copula, self.theta, self.clusters)
        })
    }

    /// Target censoring percentage, when the cell uses one of the standard
    /// levels.
    pub fn censoring_percent(&self) -> Option<u32> {
        let cur = self.censor_lambda.map(|l| (l, self.censor_rho.unwrap_or(default_rho())));
        CENSORING_LEVELS.iter().find(|(_, c)| *c == cur).map(|(p, _)| *p)
    }

    pub fn simulation_config(&self, seed: u64, replicates: usize) -> Result<SimulationConfig, CliError> {
        let censoring = match (self.censor_lambda, self.censor_rho) {
            (Some(lambda), rho) => Some(Censoring { lambda, rho: rho.unwrap_or(default_rho()) }),
            (None, Some(_)) => return Err(CliError::Input(format!("{}: censor_rho given without censor_lambda", self.label()))),
            (None, None) => None,
        };
        let cfg = SimulationConfig {
            family: self.copula,
            theta0: self.theta,
            n_clusters: self.clusters,
            size_min: self.size_min,
            size_max: self.size_max,
            margin: WeibullMargin { lambda: self.lambda, rho: self.rho, beta: vec![self.beta] },
            covariate_rule: CovariateRule::Bernoulli { p: 0.5 },
            censoring,
            seed,
            replicates,
        };
        cfg.validate().map_err(|e| CliError::Input(format!("{}: {e}", self.label())))?;
        Ok(cfg)
    }
}

/// Every built-in cell, in table order: K, copula, theta0, censoring.
pub fn builtin_cells() -> Vec<Cell> {
    let mut cells = Vec::new();
    for k in CLUSTER_COUNTS {
        let rows = CLAYTON_THETAS
            .iter()
            .map(|&t| (Family::Clayton, t))
            .chain(GUMBEL_THETAS.iter().map(|&t| (Family::GumbelHougaard, t)));
        for (family, theta) in rows {
            for (pct, _) in CENSORING_LEVELS {
                cells.push(Cell::standard(family, theta, k, pct).expect("standard level"));
            }
        }
    }
    cells
}

pub fn builtin_names() -> Vec<String> {
    let mut names: Vec<String> = vec!["all".into(), "table-k50".into(), "table-k200".into()];
    names.extend(builtin_cells().into_iter().map(|c| c.label()));
    names
}

/// Resolve a comma-separated list of cell or group names.
pub fn resolve_scenarios(spec: &str) -> Result<Vec<Cell>, CliError> {
    let all = builtin_cells();
    let mut out = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let matched: Vec<Cell> = match name {
            "all" => all.clone(),
            "table-k50" => all.iter().filter(|c| c.clusters == 50).cloned().collect(),
            "table-k200" => all.iter().filter(|c| c.clusters == 200).cloned().collect(),
            _ => all.iter().filter(|c| c.label() == name).cloned().collect(),
        };
        if matched.is_empty() {
            return Err(CliError::Input(format!(
                "unknown scenario '{name}'; valid names are:\n  {}",
                builtin_names().join("\n  ")
            )));
        }
        out.extend(matched);
    }
    if out.is_empty() {
        return Err(CliError::Input("no scenario given".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    cell: Vec<Cell>,
}

/// Cells from a TOML grid file with one `[[cell]]` table per cell.
pub fn load_grid(path: &Path) -> Result<Vec<Cell>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read grid {}: {e}", path.display())))?;
    parse_grid(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn parse_grid(text: &str) -> Result<Vec<Cell>, CliError> {
    let grid: GridFile = toml::from_str(text).map_err(|e| CliError::Input(format!("grid: {e}")))?;
    if grid.cell.is_empty() {
        return Err(CliError::Input("grid has no cells".into()));
    }
    Ok(grid.cell)
}
