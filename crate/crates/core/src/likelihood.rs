//! Copula log-likelihood for clusters of arbitrary size.
//!
//! The contribution of cluster `i` with `d_i` observed events is
//!
//! ```text
//! L_i = prod_{j: event} [ f(x_ij) / phi'(phi^{-1}(S(x_ij))) ] * phi^{(d_i)}( sum_j phi^{-1}(S(x_ij)) )
//! ```
//!
//! Both the product and the derivative carry the sign `(-1)^{d_i}`, so `L_i`
//! is positive and is evaluated as a sum of logs. Margins without a density
//! (the Cox plug-in) drop the `f` factor, which does not depend on `theta`.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::generators::{CoefficientTable, Family, Generator};
use crate::margins::{Cluster, Dataset, MarginModel};
use crate::math::{abs, NeumaierSum};

/// `ln(1e-300)`: marginal survival values below this are reported as
/// underflow instead of being clamped.
pub const LOG_SURVIVAL_FLOOR: f64 = -690.775_527_898_213_7;

/// Per-cluster intermediate quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterWorkspace {
    /// `ln S(x_ij | Z_ij)` for every subject.
    pub log_survival: Vec<f64>,
    /// `ln f(x_ij | Z_ij)` for uncensored subjects when the margin has a density.
    pub log_density: Vec<Option<f64>>,
    /// Event count `d_i`.
    pub events: usize,
    /// `sum_j phi^{-1}(S(x_ij | Z_ij))`.
    pub t_sum: f64,
}

impl ClusterWorkspace {
    pub fn build(gen: &Generator, margin: &MarginModel, cluster: &Cluster) -> Result<Self> {
        let n = cluster.len();
        let mut log_survival = Vec::with_capacity(n);
        let mut log_density = Vec::with_capacity(n);
        let mut t_sum = NeumaierSum::default();
        for (j, s) in cluster.subjects.iter().enumerate() {
            let (log_s, log_f) = margin.log_terms(s)?;
            if log_s < LOG_SURVIVAL_FLOOR || log_s.is_nan() {
                return Err(Error::Underflow { subject: j, log_survival: log_s });
            }
            t_sum.add(gen.phi_inv_log(log_s)?);
            log_survival.push(log_s);
            log_density.push(log_f);
        }
        Ok(ClusterWorkspace { log_survival, log_density, events: cluster.events(), t_sum: t_sum.total() })
    }
}

/// Coefficient table for `gen` able to serve clusters with up to `max_events`
/// events.
pub fn table_for(gen: &Generator, max_events: usize) -> Result<CoefficientTable> {
    CoefficientTable::new(max_events.max(1), gen.table_alpha())
}

/// Log-likelihood contribution of one cluster.
pub fn cluster_loglik(
    gen: &Generator,
    margin: &MarginModel,
    cluster: &Cluster,
    table: &CoefficientTable,
) -> Result<f64> {
    let d = cluster.events();
    if d > table.max_order() {
        return Err(Error::TableTooSmall { needed: d, have: table.max_order() });
    }
    let mut t_sum = NeumaierSum::default();
    let mut event_terms = NeumaierSum::default();
    for (j, s) in cluster.subjects.iter().enumerate() {
        let (log_s, log_f) = margin.log_terms(s)?;
        if log_s < LOG_SURVIVAL_FLOOR || log_s.is_nan() {
            return Err(Error::Underflow { subject: j, log_survival: log_s });
        }
        let inv = gen.phi_inv_log(log_s)?;
        t_sum.add(inv);
        if s.event {
            let slope = gen.log_neg_phi_prime(inv);
            if !slope.is_finite() {
                return Err(Error::Numerical(alloc::format!(
                    "generator slope not finite for subject {j} (phi^-1(S) = {inv})"
                )));
            }
            event_terms.add(log_f.unwrap_or(0.0) - slope);
        }
    }
    let deriv = gen.phi_deriv(t_sum.total(), d, table)?;
    let expected_sign = if d.is_multiple_of(2) { 1 } else { -1 };
    if deriv.sign != expected_sign || !deriv.log_abs.is_finite() {
        return Err(Error::Numerical(alloc::format!(
            "generator derivative of order {d} has sign {} and log-magnitude {}",
            deriv.sign,
            deriv.log_abs
        )));
    }
    Ok(event_terms.total() + deriv.log_abs)
}

fn check_covariates(margin: &MarginModel, data: &Dataset) -> Result<()> {
    if margin.covariate_count() != data.covariate_count() {
        return Err(Error::InvalidData(alloc::format!(
            "margin has {} coefficients, data has {} covariates",
            margin.covariate_count(),
            data.covariate_count()
        )));
    }
    Ok(())
}

/// Sum of cluster contributions in cluster-id order with compensated
/// summation.
pub fn total_loglik(gen: &Generator, margin: &MarginModel, data: &Dataset, table: &CoefficientTable) -> Result<f64> {
    check_covariates(margin, data)?;
    let mut acc = NeumaierSum::default();
    for c in data.clusters() {
        let v = cluster_loglik(gen, margin, c, table)
            .map_err(|e| Error::InCluster { cluster: c.id.clone(), source: Box::new(e) })?;
        acc.add(v);
    }
    Ok(acc.total())
}

/// Per-cluster contributions, in cluster-id order.
pub fn cluster_logliks(
    gen: &Generator,
    margin: &MarginModel,
    data: &Dataset,
    table: &CoefficientTable,
) -> Result<Vec<f64>> {
    check_covariates(margin, data)?;
    data.clusters()
        .iter()
        .map(|c| {
            cluster_loglik(gen, margin, c, table)
                .map_err(|e| Error::InCluster { cluster: c.id.clone(), source: Box::new(e) })
        })
        .collect()
}

/// Total log-likelihood as a function of theta alone, building the
/// coefficient table the family needs.
pub fn loglik_at_theta(family: Family, theta: f64, margin: &MarginModel, data: &Dataset) -> Result<f64> {
    let gen = Generator::new(family, theta)?;
    let table = table_for(&gen, data.max_events())?;
    total_loglik(&gen, margin, data, &table)
}

/// Central-difference derivative of the log-likelihood in theta with step
/// `max(1e-5, 1e-5 |theta|)`, shrunk when `theta +- h` leaves the domain.
pub fn profile_score_theta(family: Family, margin: &MarginModel, data: &Dataset, theta: f64) -> Result<f64> {
    if !family.contains(theta) {
        return Err(Error::ParameterDomain { family, theta });
    }
    let mut h = f64::max(1e-5, 1e-5 * abs(theta));
    let mut tries = 0;
    while !(family.contains(theta - h) && family.contains(theta + h)) {
        h *= 0.5;
        tries += 1;
        if tries > 40 {
            return Err(Error::Domain(alloc::format!("theta = {theta} is at the {family} boundary")));
        }
    }
    let up = loglik_at_theta(family, theta + h, margin, data)?;
    let down = loglik_at_theta(family, theta - h, margin, data)?;
    Ok((up - down) / (2.0 * h))
}
