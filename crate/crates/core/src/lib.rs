//! Archimedean copula models for clustered, right-censored survival data.
//!
//! Clusters may have arbitrary and varying size. The likelihood of a cluster
//! is evaluated through derivatives of the copula generator, which for the
//! power-variance-function (PVF) family have a closed form; everything is kept
//! in the log domain so clusters with a hundred or more events stay finite.
//!
//! Layout:
//!
//! - [`generators`]: Clayton, Gumbel-Hougaard and inverse-Gaussian generators,
//!   their inverses, and k-th derivatives via the PVF coefficient recursion.
//! - [`margins`]: clustered data types, Weibull and Cox/Breslow margins.
//! - [`likelihood`]: per-cluster and total copula log-likelihood.
//! - [`estimators`]: one-stage, two-stage parametric and two-stage
//!   semiparametric estimators, variance formulas, grouped jackknife.
//! - [`simulation`]: Marshall-Olkin sampling of clustered data with
//!   Weibull margins and censoring, and replication summaries.
//!
//! The crate is `no_std` and only needs `alloc`. IO, the command line and
//! parallel drivers live in the `copulasurv` crate.

#![no_std]
#![forbid(unsafe_code)]
// NaN-rejecting checks are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod estimators;
pub mod generators;
pub mod likelihood;
pub mod linalg;
pub mod margins;
pub mod math;
pub mod optim;
pub mod simulation;

pub use error::{Error, Result};
pub use estimators::{FitReport, Method, SeMethod};
pub use generators::{CoefficientTable, Family, Generator, PvfParams, SignedLog};
pub use margins::{Cluster, CoxMargin, Dataset, MarginModel, Subject, WeibullMargin};
