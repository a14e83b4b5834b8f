use copulasurv_core::Error as CoreError;

/// Failures surfaced by the command line, with their exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Output(String),
    #[error("fit did not converge: {0}")]
    Convergence(CoreError),
    #[error(transparent)]
    Core(CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Convergence(_) => 2,
            _ => 1,
        }
    }

    pub fn from_csv(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

fn root(e: &CoreError) -> &CoreError {
    match e {
        CoreError::InCluster { source, .. } => root(source),
        other => other,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match root(&e) {
            CoreError::Convergence { .. }
            | CoreError::Divergence { .. }
            | CoreError::Jackknife { .. }
            | CoreError::Numerical(_)
            | CoreError::Singular
            | CoreError::Quadrature { .. } => CliError::Convergence(e),
            _ => CliError::Core(e),
        }
    }
}
