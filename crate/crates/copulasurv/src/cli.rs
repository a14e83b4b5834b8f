//! Command-line surface: `fit`, `simulate` and `replicate`.
//!
//! Exit codes: 0 success, 1 input or output error, 2 fit failed to converge.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use copulasurv_core::simulation::{censoring_rate, generate_dataset};
use copulasurv_core::{Family, Method};

use crate::config::RunConfig;
use crate::csv_io;
use crate::error::CliError;
use crate::replicate::{self, ReplicateRequest};
use crate::report::{self, FitOutput, ReplicateReport, SimulateManifest, SimulatedFile, SCHEMA_VERSION};
use crate::scenarios::{self, Cell};

#[derive(Debug, Parser)]
#[command(name = "copulasurv", version, about = "Archimedean copula models for clustered survival data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a copula model to a CSV dataset and print a JSON report.
    Fit(FitArgs),
    /// Write simulated datasets as CSV files plus a manifest.
    Simulate(SimulateArgs),
    /// Run replicated simulation cells and summarise the estimators.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// TOML file with default values for any of the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// clayton, gumbel or invgauss.
    #[arg(long)]
    pub copula: Option<String>,
    /// one-stage, two-stage or semiparam.
    #[arg(long)]
    pub method: Option<String>,
    /// Number of cluster groups for the jackknife (default: one per cluster).
    #[arg(long)]
    pub jackknife_groups: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub copula: Option<String>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub size_min: Option<usize>,
    #[arg(long)]
    pub size_max: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub censor_lambda: Option<f64>,
    #[arg(long)]
    pub censor_rho: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in cell or group names, comma separated (`all`, `table-k50`,
    /// `table-k200`, `clayton-0.5-k200-c0`, ...).
    #[arg(long, conflicts_with = "grid")]
    pub scenario: Option<String>,
    /// TOML file with `[[cell]]` tables.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of one-stage,two-stage,semiparam.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub jackknife_groups: Option<usize>,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    /// What to print on standard output: table or json.
    #[arg(long)]
    pub format: Option<String>,
}

fn base_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn parse_family(s: Option<&str>, default: Family) -> Result<Family, CliError> {
    match s {
        Some(s) => s.parse().map_err(|e: copulasurv_core::Error| CliError::Input(e.to_string())),
        None => Ok(default),
    }
}

fn parse_methods(s: &str) -> Result<Vec<Method>, CliError> {
    let methods = s
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| m.parse().map_err(|e: copulasurv_core::Error| CliError::Input(e.to_string())))
        .collect::<Result<Vec<Method>, _>>()?;
    if methods.is_empty() {
        return Err(CliError::Input("no methods given".into()));
    }
    Ok(methods)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = to_json(value)?;
    std::fs::write(path, text).map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let flags = RunConfig {
        data: args.data.clone(),
        copula: args.copula.clone(),
        method: args.method.clone(),
        jackknife_groups: args.jackknife_groups,
        seed: args.seed,
        threads: args.threads,
        json_out: args.json_out.clone(),
        ..Default::default()
    };
    let mut cfg = base_config(&args.config)?.overridden_by(&flags);
    let data_path = cfg.data.clone().ok_or_else(|| CliError::Input("--data is required".into()))?;
    let family = parse_family(cfg.copula.as_deref(), Family::Clayton)?;
    let method: Method = cfg
        .method
        .as_deref()
        .unwrap_or("two-stage")
        .parse()
        .map_err(|e: copulasurv_core::Error| CliError::Input(e.to_string()))?;
    let threads = cfg.worker_threads()?;
    let data = csv_io::read_dataset(&data_path)?;
    cfg.copula = Some(family.name().into());
    cfg.method = Some(method.name().into());
    if method == Method::TwoStageSemiparametric {
        cfg.jackknife_groups = Some(cfg.jackknife_groups.unwrap_or(data.n_clusters()));
    }
    let pool = replicate::pool(threads)?;
    let (output, code) = match replicate::fit_parallel(method, family, &data, cfg.jackknife_groups, &pool) {
        Ok(r) => (FitOutput::from_report(&r, &data, cfg.clone()), 0),
        Err(e) => match CliError::from(e) {
            CliError::Convergence(e) => (FitOutput::failed(method, family, &data, e.to_string(), cfg.clone()), 2),
            other => return Err(other),
        },
    };
    let text = to_json(&output)?;
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::Output(e.to_string()))?;
    if let Some(p) = &cfg.json_out {
        write_json(p, &output)?;
    }
    if code != 0 {
        let _ = writeln!(std::io::stderr(), "error: {}", output.error.as_deref().unwrap_or("fit did not converge"));
    }
    Ok(code)
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let flags = RunConfig {
        copula: args.copula.clone(),
        theta: args.theta,
        clusters: args.clusters,
        size_min: args.size_min,
        size_max: args.size_max,
        lambda: args.lambda,
        rho: args.rho,
        beta: args.beta,
        censor_lambda: args.censor_lambda,
        censor_rho: args.censor_rho,
        seed: args.seed,
        out: args.out.clone(),
        replicates: args.replicates,
        threads: args.threads,
        ..Default::default()
    };
    let mut cfg = base_config(&args.config)?.overridden_by(&flags);
    let out = cfg.out.clone().ok_or_else(|| CliError::Input("--out is required".into()))?;
    let family = parse_family(cfg.copula.as_deref(), Family::Clayton)?;
    let cell = Cell {
        name: None,
        copula: family,
        theta: cfg.theta.unwrap_or(0.5),
        clusters: cfg.clusters.unwrap_or(200),
        size_min: cfg.size_min.unwrap_or(2),
        size_max: cfg.size_max.unwrap_or(50),
        lambda: cfg.lambda.unwrap_or(0.0316),
        rho: cfg.rho.unwrap_or(1.5),
        beta: cfg.beta.unwrap_or(3.0),
        censor_lambda: cfg.censor_lambda,
        censor_rho: cfg.censor_lambda.map(|_| cfg.censor_rho.unwrap_or(1.5)),
    };
    let seed = cfg.seed.unwrap_or(0);
    let replicates = cfg.replicates.unwrap_or(1);
    if replicates == 0 {
        return Err(CliError::Input("--replicates must be at least 1".into()));
    }
    let sim = cell.simulation_config(seed, replicates)?;
    cfg.copula = Some(family.name().into());
    cfg.theta = Some(cell.theta);
    cfg.clusters = Some(cell.clusters);
    cfg.size_min = Some(cell.size_min);
    cfg.size_max = Some(cell.size_max);
    cfg.lambda = Some(cell.lambda);
    cfg.rho = Some(cell.rho);
    cfg.beta = Some(cell.beta);
    cfg.censor_rho = cell.censor_rho;
    cfg.seed = Some(seed);
    cfg.replicates = Some(replicates);

    std::fs::create_dir_all(&out).map_err(|e| CliError::Output(format!("cannot create {}: {e}", out.display())))?;
    let width = replicates.saturating_sub(1).to_string().len().max(3);
    let pool = replicate::pool(cfg.worker_threads()?)?;
    let files = pool.install(|| {
        use rayon::prelude::*;
        (0..replicates as u64)
            .into_par_iter()
            .map(|r| {
                let data = generate_dataset(&sim, r)?;
                let name = format!("sim_{r:0width$}.csv");
                csv_io::write_dataset(&out.join(&name), &data)?;
                Ok(SimulatedFile {
                    file: name,
                    replicate: r,
                    clusters: data.n_clusters(),
                    subjects: data.n_subjects(),
                    events: data.n_events(),
                    censoring_rate: censoring_rate(&data),
                })
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let manifest = SimulateManifest { schema_version: SCHEMA_VERSION, resolved_config: cfg, files };
    write_json(&out.join("manifest.json"), &manifest)?;
    for f in &manifest.files {
        let _ = writeln!(stdout, "{} clusters={} subjects={} censored={:.3}", f.file, f.clusters, f.subjects, f.censoring_rate);
    }
    Ok(0)
}

pub fn cmd_replicate(args: &ReplicateArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let flags = RunConfig {
        scenario: args.scenario.clone(),
        grid: args.grid.clone(),
        replicates: args.replicates,
        threads: args.threads,
        seed: args.seed,
        methods: args.methods.clone(),
        jackknife_groups: args.jackknife_groups,
        json_out: args.json_out.clone(),
        format: args.format.clone(),
        ..Default::default()
    };
    let mut cfg = base_config(&args.config)?.overridden_by(&flags);
    let cells = match (&cfg.scenario, &cfg.grid) {
        (Some(_), Some(_)) => return Err(CliError::Input("give either --scenario or --grid, not both".into())),
        (Some(s), None) => scenarios::resolve_scenarios(s)?,
        (None, Some(g)) => scenarios::load_grid(g)?,
        (None, None) => {
            return Err(CliError::Input(format!(
                "--scenario or --grid is required; built-in scenarios:\n  {}",
                scenarios::builtin_names().join("\n  ")
            )))
        }
    };
    let methods = parse_methods(cfg.methods.as_deref().unwrap_or("one-stage,two-stage,semiparam"))?;
    let format = cfg.format.clone().unwrap_or_else(|| "table".into());
    if format != "table" && format != "json" {
        return Err(CliError::Input(format!("--format must be table or json (got '{format}')")));
    }
    let req = ReplicateRequest {
        cells,
        replicates: cfg.replicates.unwrap_or(100),
        seed: cfg.seed.unwrap_or(0),
        methods: methods.clone(),
        jackknife_groups: cfg.jackknife_groups,
    };
    cfg.replicates = Some(req.replicates);
    cfg.seed = Some(req.seed);
    cfg.methods = Some(methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","));
    cfg.format = Some(format.clone());
    let pool = replicate::pool(cfg.worker_threads()?)?;
    let cells = replicate::run_cells(&req, &pool)?;
    let failed = cells.iter().any(|c| c.error.is_some());
    let report = ReplicateReport { schema_version: SCHEMA_VERSION, resolved_config: cfg.clone(), cells };
    let text = if format == "json" { to_json(&report)? } else { report::render_table(&report, &methods) };
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::Output(e.to_string()))?;
    if let Some(p) = &cfg.json_out {
        write_json(p, &report)?;
    }
    Ok(if failed { 2 } else { 0 })
}

/// Parse `args` (program name first), run the command and return the exit
/// code. Errors are printed on standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a, &mut stdout),
        Command::Simulate(a) => cmd_simulate(a, &mut stdout),
        Command::Replicate(a) => cmd_replicate(a, &mut stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            e.exit_code()
        }
    }
}
