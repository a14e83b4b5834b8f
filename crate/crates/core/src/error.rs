use alloc::boxed::Box;
use alloc::string::String;
use thiserror::Error;

use crate::generators::Family;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("theta = {theta} is outside the parameter domain of the {family} family")]
    ParameterDomain { family: Family, theta: f64 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("generator derivative of order {order} is singular at s = 0 for {family}")]
    SingularPoint { family: Family, order: usize },

    #[error("coefficient table holds orders up to {have}, order {needed} requested")]
    TableTooSmall { needed: usize, have: usize },

    #[error("coefficient table built for alpha = {table}, generator needs alpha = {generator}")]
    TableMismatch { table: f64, generator: f64 },

    #[error("marginal survival underflow for subject {subject} (log S = {log_survival})")]
    Underflow { subject: usize, log_survival: f64 },

    #[error("cluster {cluster}: {source}")]
    InCluster { cluster: String, source: Box<Error> },

    #[error("model not identifiable: {0}")]
    Identifiability(String),

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e}, objective {objective})")]
    Convergence { iterations: usize, grad_norm: f64, objective: f64 },

    #[error("partial likelihood diverges (monotone likelihood); coefficient {coefficient} grows without bound")]
    Divergence { coefficient: usize },

    #[error("matrix is singular or not positive definite")]
    Singular,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("quadrature did not reach tolerance {tolerance:e} (error estimate {estimate:e}, {intervals} intervals)")]
    Quadrature { tolerance: f64, estimate: f64, intervals: usize },

    #[error("{failed} of {total} jackknife refits failed")]
    Jackknife { failed: usize, total: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),
}

pub type Result<T> = core::result::Result<T, Error>;
