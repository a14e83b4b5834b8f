//! Flat key-value run configuration. Every command-line flag has a key of
//! the same name (dashes become underscores); flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const THREADS_ENV: &str = "COPULASURV_THREADS";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // fit
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub copula: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jackknife_groups: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json_out: Option<PathBuf>,
    // shared
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker count; execution detail only, never echoed into reports.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    // simulate
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size_min: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censor_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censor_rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    // replicate
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),*) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    /// `self` with every value set in `flags` replaced.
    pub fn overridden_by(mut self, flags: &RunConfig) -> Self {
        overlay!(
            self, flags, data, copula, method, jackknife_groups, json_out, seed, threads, theta, clusters, size_min,
            size_max, lambda, rho, beta, censor_lambda, censor_rho, out, replicates, scenario, grid, methods, format
        );
        self
    }

    /// Worker count: the resolved value, then the environment, then the
    /// number of available cores.
    pub fn worker_threads(&self) -> Result<usize, CliError> {
        if let Some(n) = self.threads {
            return if n == 0 { Err(CliError::Input("--threads must be at least 1".into())) } else { Ok(n) };
        }
        if let Ok(v) = std::env::var(THREADS_ENV) {
            return v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Input(format!("{THREADS_ENV}='{v}' is not a positive integer")));
        }
        Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("copula = \"clayton\"\nbogus = 1\n").is_err());
        let c = RunConfig::from_toml("copula = \"clayton\"\nseed = 4\n").unwrap();
        assert_eq!(c.seed, Some(4));
    }

    #[test]
    fn flags_win_over_file() {
        let file = RunConfig { copula: Some("gumbel".into()), seed: Some(1), ..Default::default() };
        let flags = RunConfig { seed: Some(9), ..Default::default() };
        let merged = file.overridden_by(&flags);
        assert_eq!(merged.copula.as_deref(), Some("gumbel"));
        assert_eq!(merged.seed, Some(9));
    }

    #[test]
    fn threads_are_not_echoed() {
        let c = RunConfig { threads: Some(8), seed: Some(1), ..Default::default() };
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"seed":1}"#);
    }
}
