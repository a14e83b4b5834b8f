//! Clustered survival data from Archimedean copulas via the Marshall-Olkin
//! frailty construction, and aggregation of replicated fits.
//!
//! Every random quantity comes from a ChaCha8 stream keyed by
//! `(seed, replicate)` (cluster sizes) or `(seed, replicate, cluster)`
//! (cluster contents), so a dataset depends only on the seed and replicate
//! index, never on evaluation order.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, InverseGaussian};

use crate::error::{Error, Result};
use crate::estimators::{self, Method};
use crate::generators::{Family, Generator};
use crate::margins::{Cluster, Dataset, Subject, WeibullMargin};
use crate::math::{exp, ln, pow, sin, sqrt};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CovariateRule {
    /// No covariates.
    None,
    /// One dichotomous covariate `z ~ Bernoulli(p)` per subject.
    Bernoulli { p: f64 },
}

impl CovariateRule {
    pub fn count(&self) -> usize {
        match self {
            CovariateRule::None => 0,
            CovariateRule::Bernoulli { .. } => 1,
        }
    }

    pub fn names(&self) -> Vec<String> {
        match self {
            CovariateRule::None => Vec::new(),
            CovariateRule::Bernoulli { .. } => alloc::vec!["z".into()],
        }
    }
}

/// Independent Weibull censoring `S_C(t) = exp(-lambda t^rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Censoring {
    pub lambda: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimulationConfig {
    pub family: Family,
    pub theta0: f64,
    pub n_clusters: usize,
    pub size_min: usize,
    pub size_max: usize,
    pub margin: WeibullMargin,
    pub covariate_rule: CovariateRule,
    pub censoring: Option<Censoring>,
    pub seed: u64,
    pub replicates: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            family: Family::Clayton,
            theta0: 0.5,
            n_clusters: 200,
            size_min: 2,
            size_max: 50,
            margin: WeibullMargin { lambda: 0.0316, rho: 1.5, beta: alloc::vec![3.0] },
            covariate_rule: CovariateRule::Bernoulli { p: 0.5 },
            censoring: None,
            seed: 0,
            replicates: 100,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.family.contains(self.theta0) {
            return Err(Error::ParameterDomain { family: self.family, theta: self.theta0 });
        }
        if self.n_clusters == 0 {
            return Err(Error::Domain("need at least one cluster".into()));
        }
        if self.size_min == 0 || self.size_min > self.size_max {
            return Err(Error::Domain(alloc::format!(
                "cluster sizes need 1 <= size_min <= size_max (got {}..{})",
                self.size_min,
                self.size_max
            )));
        }
        WeibullMargin::new(self.margin.lambda, self.margin.rho, self.margin.beta.clone())?;
        if self.margin.beta.len() != self.covariate_rule.count() {
            return Err(Error::Domain(alloc::format!(
                "margin has {} coefficients but the covariate rule makes {}",
                self.margin.beta.len(),
                self.covariate_rule.count()
            )));
        }
        if let CovariateRule::Bernoulli { p } = self.covariate_rule {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(alloc::format!("Bernoulli probability {p} outside [0, 1]")));
            }
        }
        if let Some(c) = self.censoring {
            if !(c.lambda > 0.0 && c.rho > 0.0 && c.lambda.is_finite() && c.rho.is_finite()) {
                return Err(Error::Domain(alloc::format!(
                    "censoring needs lambda_C > 0 and rho_C > 0 (got {}, {})",
                    c.lambda,
                    c.rho
                )));
            }
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for the key path `keys` under `seed`.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k.wrapping_add(0x5851_f42d_4c95_7f2d))))
}

pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, keys))
}

/// Positive stable variable with Laplace transform `exp(-t^alpha)`,
/// `0 < alpha < 1`, by the Kanter / Chambers-Mallows-Stuck representation.
pub fn sample_positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u: f64 = PI * rng.sample::<f64, _>(Open01);
    let e: f64 = Exp1.sample(rng);
    let a = sin(alpha * u) / pow(sin(u), 1.0 / alpha);
    let b = pow(sin((1.0 - alpha) * u) / e, (1.0 - alpha) / alpha);
    a * b
}

/// One draw `W` of the frailty whose Laplace transform is the generator.
pub fn sample_mixing_variable<R: Rng + ?Sized>(family: Family, theta: f64, rng: &mut R) -> Result<f64> {
    if !family.contains(theta) {
        return Err(Error::ParameterDomain { family, theta });
    }
    let w = match family {
        Family::Clayton => Gamma::new(1.0 / theta, theta).map_err(|e| Error::Domain(alloc::format!("{e}")))?.sample(rng),
        Family::GumbelHougaard => sample_positive_stable(theta, rng),
        Family::InverseGaussian => {
            InverseGaussian::new(1.0, 1.0 / theta).map_err(|e| Error::Domain(alloc::format!("{e}")))?.sample(rng)
        }
    };
    Ok(w)
}

/// Event time on the Marshall-Olkin path: `U = phi(e / w)`, then `S(T | z) = U`.
pub fn marshall_olkin_time(gen: &Generator, margin: &WeibullMargin, z: &[f64], w: f64, e: f64) -> f64 {
    let log_u = gen.log_phi(e / w);
    let t = margin.time_at_log_survival(log_u, z);
    t.clamp(f64::MIN_POSITIVE, f64::MAX)
}

fn draw_covariates<R: Rng + ?Sized>(rule: &CovariateRule, rng: &mut R) -> Vec<f64> {
    match rule {
        CovariateRule::None => Vec::new(),
        CovariateRule::Bernoulli { p } => alloc::vec![if rng.random::<f64>() < *p { 1.0 } else { 0.0 }],
    }
}

/// A cluster of `n` subjects sharing one frailty draw.
pub fn sample_cluster<R: Rng + ?Sized>(cfg: &SimulationConfig, id: String, n: usize, rng: &mut R) -> Result<Cluster> {
    let gen = Generator::new(cfg.family, cfg.theta0)?;
    let w = sample_mixing_variable(cfg.family, cfg.theta0, rng)?;
    let mut subjects = Vec::with_capacity(n);
    for _ in 0..n {
        let z = draw_covariates(&cfg.covariate_rule, rng);
        let e: f64 = Exp1.sample(rng);
        let t = marshall_olkin_time(&gen, &cfg.margin, &z, w, e);
        let (time, event) = match cfg.censoring {
            Some(c) => {
                let ec: f64 = Exp1.sample(rng);
                let cens = exp(ln(ec / c.lambda) / c.rho).max(f64::MIN_POSITIVE);
                if t <= cens {
                    (t, true)
                } else {
                    (cens, false)
                }
            }
            None => (t, true),
        };
        subjects.push(Subject::new(time, event, z));
    }
    Ok(Cluster::new(id, subjects))
}

/// Dataset for replicate `replicate`; cluster ids are zero-padded so that id
/// order equals generation order.
pub fn generate_dataset(cfg: &SimulationConfig, replicate: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut sizes_rng = stream(cfg.seed, &[replicate]);
    let sizes: Vec<usize> = (0..cfg.n_clusters).map(|_| sizes_rng.random_range(cfg.size_min..=cfg.size_max)).collect();
    let width = digits(cfg.n_clusters);
    let clusters = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut rng = stream(cfg.seed, &[replicate, i as u64 + 1]);
            sample_cluster(cfg, alloc::format!("c{i:0width$}"), n, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(clusters, cfg.covariate_rule.names())
}

fn digits(n: usize) -> usize {
    let mut d = 1;
    let mut m = n.saturating_sub(1);
    while m >= 10 {
        m /= 10;
        d += 1;
    }
    d
}

pub fn censoring_rate(data: &Dataset) -> f64 {
    let n = data.n_subjects();
    if n == 0 {
        return 0.0;
    }
    (n - data.n_events()) as f64 / n as f64
}

// ---------------------------------------------------------------------------
// Replication
// ---------------------------------------------------------------------------

/// Theta estimate and its model SE from one replicate and one method.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ReplicateFit {
    pub estimate: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub censoring_rate: f64,
    /// One entry per requested method, in request order.
    pub fits: Vec<core::result::Result<ReplicateFit, String>>,
}

/// Generate replicate `replicate` and fit it with each method. Fit errors are
/// recorded, not propagated; data generation errors are propagated.
pub fn run_replicate(cfg: &SimulationConfig, replicate: u64, methods: &[Method], jackknife_groups: Option<usize>) -> Result<ReplicateOutcome> {
    let data = generate_dataset(cfg, replicate)?;
    let fits = methods
        .iter()
        .map(|&m| {
            let groups = jackknife_groups.map(|g| g.min(data.n_clusters()));
            estimators::fit(m, cfg.family, &data, groups)
                .map(|r| ReplicateFit { estimate: r.theta(), se: r.theta_se() })
                .map_err(|e| alloc::format!("{e}"))
        })
        .collect();
    Ok(ReplicateOutcome { replicate, censoring_rate: censoring_rate(&data), fits })
}

/// Per-method aggregate over replicates.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct MethodSummary {
    pub method: Method,
    pub replicates: usize,
    pub successes: usize,
    pub failures: usize,
    pub mean_estimate: Option<f64>,
    pub mean_se: Option<f64>,
    /// `None` with fewer than two successful replicates.
    pub empirical_sd: Option<f64>,
    /// Share of intervals `estimate +- 1.96 SE` containing theta0.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ReplicationSummary {
    pub theta0: f64,
    pub replicates: usize,
    pub mean_censoring_rate: f64,
    pub methods: Vec<MethodSummary>,
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn summarize_method(method: Method, theta0: f64, fits: &[core::result::Result<ReplicateFit, String>]) -> MethodSummary {
    let ok: Vec<&ReplicateFit> = fits.iter().filter_map(|f| f.as_ref().ok()).collect();
    let estimates: Vec<f64> = ok.iter().map(|f| f.estimate).collect();
    let ses: Vec<f64> = ok.iter().filter_map(|f| f.se).collect();
    let mean_estimate = mean(&estimates);
    let empirical_sd = match (mean_estimate, estimates.len()) {
        (Some(m), n) if n >= 2 => Some(sqrt(estimates.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (n - 1) as f64)),
        _ => None,
    };
    let with_se: Vec<(f64, f64)> = ok.iter().filter_map(|f| f.se.map(|s| (f.estimate, s))).collect();
    let coverage = if with_se.is_empty() {
        None
    } else {
        let hit = with_se.iter().filter(|(e, s)| (e - theta0).abs() <= 1.96 * s).count();
        Some(hit as f64 / with_se.len() as f64)
    };
    MethodSummary {
        method,
        replicates: fits.len(),
        successes: ok.len(),
        failures: fits.len() - ok.len(),
        mean_estimate,
        mean_se: mean(&ses),
        empirical_sd,
        coverage,
    }
}

/// Aggregate outcomes (any order; they are sorted by replicate index). Errors
/// when more than 10% of the fits of any method failed.
pub fn summarize(theta0: f64, methods: &[Method], outcomes: &[ReplicateOutcome]) -> Result<ReplicationSummary> {
    let mut sorted: Vec<&ReplicateOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.replicate);
    let mut summaries = Vec::with_capacity(methods.len());
    for (k, &m) in methods.iter().enumerate() {
        let fits: Vec<_> = sorted.iter().map(|o| o.fits[k].clone()).collect();
        let s = summarize_method(m, theta0, &fits);
        if s.failures * 10 > s.replicates {
            return Err(Error::Numerical(alloc::format!(
                "{} of {} {} fits failed (more than 10%)",
                s.failures,
                s.replicates,
                m
            )));
        }
        summaries.push(s);
    }
    let rates: Vec<f64> = sorted.iter().map(|o| o.censoring_rate).collect();
    Ok(ReplicationSummary {
        theta0,
        replicates: sorted.len(),
        mean_censoring_rate: mean(&rates).unwrap_or(0.0),
        methods: summaries,
    })
}

/// Sequential replication; see the std crate for a parallel driver with the
/// same output.
pub fn run_replication(cfg: &SimulationConfig, methods: &[Method], jackknife_groups: Option<usize>) -> Result<ReplicationSummary> {
    let outcomes = (0..cfg.replicates as u64)
        .map(|r| run_replicate(cfg, r, methods, jackknife_groups))
        .collect::<Result<Vec<_>>>()?;
    summarize(cfg.theta0, methods, &outcomes)
}
