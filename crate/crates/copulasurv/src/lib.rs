//! Command line, file formats and parallel drivers for `copulasurv-core`.

pub mod cli;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod replicate;
pub mod report;
pub mod scenarios;

pub use error::CliError;
