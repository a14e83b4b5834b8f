//! Parallel drivers: replicated simulation cells and jackknife refits.
//!
//! Work items are independent and results are gathered in index order, so
//! output does not depend on the number of workers.

use copulasurv_core::estimators::{self, fit_two_stage_semiparametric_with};
use copulasurv_core::simulation::{derive_seed, run_replicate, summarize, ReplicateOutcome};
use copulasurv_core::{Dataset, Family, FitReport, Method};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::CliError;
use crate::report::CellReport;
use crate::scenarios::Cell;

pub fn pool(threads: usize) -> Result<ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Input(format!("cannot start {threads} worker threads: {e}")))
}

/// Fit with jackknife refits spread over `pool`.
pub fn fit_parallel(
    method: Method,
    family: Family,
    data: &Dataset,
    jackknife_groups: Option<usize>,
    pool: &ThreadPool,
) -> copulasurv_core::Result<FitReport> {
    match method {
        Method::TwoStageSemiparametric => fit_two_stage_semiparametric_with(family, data, jackknife_groups, |groups, refit| {
            pool.install(|| groups.par_iter().map(|g| refit(g)).collect())
        }),
        other => estimators::fit(other, family, data, jackknife_groups),
    }
}

fn name_key(name: &str) -> u64 {
    // FNV-1a
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of a cell: depends on the run seed and the cell name only, so a cell
/// gives the same numbers whichever other cells run with it.
pub fn cell_seed(seed: u64, cell: &Cell) -> u64 {
    derive_seed(seed, &[name_key(&cell.label())])
}

#[derive(Debug, Clone)]
pub struct ReplicateRequest {
    pub cells: Vec<Cell>,
    pub replicates: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub jackknife_groups: Option<usize>,
}

pub fn run_cells(req: &ReplicateRequest, pool: &ThreadPool) -> Result<Vec<CellReport>, CliError> {
    if req.replicates == 0 {
        return Err(CliError::Input("--replicates must be at least 1".into()));
    }
    let configs = req
        .cells
        .iter()
        .map(|c| c.simulation_config(cell_seed(req.seed, c), req.replicates))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, u64)> =
        (0..configs.len()).flat_map(|c| (0..req.replicates as u64).map(move |r| (c, r))).collect();
    let outcomes: Vec<copulasurv_core::Result<ReplicateOutcome>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, r)| run_replicate(&configs[c], r, &req.methods, req.jackknife_groups))
            .collect()
    });
    let mut reports = Vec::with_capacity(configs.len());
    for (c, (cell, cfg)) in req.cells.iter().zip(&configs).enumerate() {
        let mine: Result<Vec<ReplicateOutcome>, _> = jobs
            .iter()
            .zip(&outcomes)
            .filter(|((ci, _), _)| *ci == c)
            .map(|(_, o)| o.clone())
            .collect();
        let summary = mine.map_err(|e| e.to_string()).and_then(|o| summarize(cfg.theta0, &req.methods, &o).map_err(|e| e.to_string()));
        let (mean_censoring_rate, methods, error) = match summary {
            Ok(s) => (Some(s.mean_censoring_rate), s.methods, None),
            Err(e) => (None, Vec::new(), Some(e)),
        };
        reports.push(CellReport {
            name: cell.label(),
            copula: cell.copula,
            theta0: cell.theta,
            clusters: cell.clusters,
            censoring_percent: cell.censoring_percent(),
            seed: cfg.seed,
            replicates: req.replicates,
            mean_censoring_rate,
            methods,
            error,
        });
    }
    Ok(reports)
}
