//! Clustered survival data and marginal survival models.
//!
//! Two margins are provided: a parametric Weibull model
//! `S(t | Z) = exp(-lambda * exp(beta'Z) * t^rho)` and a semiparametric Cox
//! model with the Breslow cumulative baseline hazard. Covariates are fixed in
//! time.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math::{abs, compensated_sum, exp, ln, NeumaierSum};
use crate::optim::{self, Options};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Subject {
    /// Observed time `min(T, C)`, strictly positive.
    pub time: f64,
    /// `true` when the event was observed.
    pub event: bool,
    pub covariates: Vec<f64>,
}

impl Subject {
    pub fn new(time: f64, event: bool, covariates: Vec<f64>) -> Self {
        Subject { time, event, covariates }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Cluster {
    pub id: String,
    pub subjects: Vec<Subject>,
}

impl Cluster {
    pub fn new(id: impl Into<String>, subjects: Vec<Subject>) -> Self {
        Cluster { id: id.into(), subjects }
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Number of observed events `d_i`.
    pub fn events(&self) -> usize {
        self.subjects.iter().filter(|s| s.event).count()
    }
}

/// A validated set of clusters, kept sorted by cluster id.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    clusters: Vec<Cluster>,
    covariate_names: Vec<String>,
}

impl Dataset {
    pub fn new(mut clusters: Vec<Cluster>, covariate_names: Vec<String>) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::InvalidData("dataset has no clusters".into()));
        }
        let p = covariate_names.len();
        for c in &clusters {
            if c.subjects.is_empty() {
                return Err(Error::InvalidData(alloc::format!("cluster '{}' is empty", c.id)));
            }
            for (j, s) in c.subjects.iter().enumerate() {
                if !(s.time > 0.0 && s.time.is_finite()) {
                    return Err(Error::InvalidData(alloc::format!(
                        "cluster '{}' subject {j}: time must be positive and finite, got {}",
                        c.id, s.time
                    )));
                }
                if s.covariates.len() != p {
                    return Err(Error::InvalidData(alloc::format!(
                        "cluster '{}' subject {j}: {} covariates, expected {p}",
                        c.id,
                        s.covariates.len()
                    )));
                }
                if s.covariates.iter().any(|z| !z.is_finite()) {
                    return Err(Error::InvalidData(alloc::format!(
                        "cluster '{}' subject {j}: non-finite covariate",
                        c.id
                    )));
                }
            }
        }
        clusters.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = clusters.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidData(alloc::format!("duplicate cluster id '{}'", w[0].id)));
        }
        Ok(Dataset { clusters, covariate_names })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariate_count(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    pub fn n_events(&self) -> usize {
        self.clusters.iter().map(Cluster::events).sum()
    }

    /// Largest per-cluster event count; sizes the coefficient table.
    pub fn max_events(&self) -> usize {
        self.clusters.iter().map(Cluster::events).max().unwrap_or(0)
    }

    pub fn subjects(&self) -> impl Iterator<Item = &Subject> {
        self.clusters.iter().flat_map(|c| c.subjects.iter())
    }

    /// Dataset without the clusters at the given positions (positions refer
    /// to the id-sorted order).
    pub fn without_clusters(&self, drop: &[usize]) -> Result<Dataset> {
        let kept = self
            .clusters
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, c)| c.clone())
            .collect();
        Dataset::new(kept, self.covariate_names.clone())
    }

    /// Dataset where each cluster is split into singletons.
    pub fn as_singletons(&self) -> Dataset {
        let clusters = self
            .clusters
            .iter()
            .flat_map(|c| {
                c.subjects
                    .iter()
                    .enumerate()
                    .map(move |(j, s)| Cluster::new(alloc::format!("{}#{j:06}", c.id), vec![s.clone()]))
            })
            .collect();
        Dataset::new(clusters, self.covariate_names.clone()).expect("splitting a valid dataset stays valid")
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weibull margin `S(t | Z) = exp(-lambda exp(beta'Z) t^rho)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeibullMargin {
    pub lambda: f64,
    pub rho: f64,
    pub beta: Vec<f64>,
}

impl WeibullMargin {
    pub fn new(lambda: f64, rho: f64, beta: Vec<f64>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite() && rho > 0.0 && rho.is_finite()) {
            return Err(Error::Domain(alloc::format!("Weibull needs lambda > 0, rho > 0 (got {lambda}, {rho})")));
        }
        Ok(WeibullMargin { lambda, rho, beta })
    }

    /// Unconstrained coordinates `(ln lambda, ln rho, beta...)`.
    pub fn to_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + self.beta.len());
        v.push(ln(self.lambda));
        v.push(ln(self.rho));
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn from_params(params: &[f64]) -> Self {
        WeibullMargin { lambda: exp(params[0]), rho: exp(params[1]), beta: params[2..].to_vec() }
    }

    /// `ln(lambda exp(beta'z))`.
    #[inline]
    pub fn log_scale(&self, z: &[f64]) -> f64 {
        ln(self.lambda) + dot(&self.beta, z)
    }

    /// `ln S(t | z) = -lambda exp(beta'z) t^rho`.
    pub fn log_survival(&self, t: f64, z: &[f64]) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(alloc::format!("survival time must be > 0, got {t}")));
        }
        Ok(-exp(self.log_scale(z) + self.rho * ln(t)))
    }

    /// `ln f(t | z) = ln(lambda rho exp(beta'z)) + (rho - 1) ln t + ln S(t | z)`.
    pub fn log_density(&self, t: f64, z: &[f64]) -> Result<f64> {
        let log_s = self.log_survival(t, z)?;
        Ok(self.log_scale(z) + ln(self.rho) + (self.rho - 1.0) * ln(t) + log_s)
    }

    pub fn hazard(&self, t: f64, z: &[f64]) -> f64 {
        exp(self.log_scale(z) + ln(self.rho) + (self.rho - 1.0) * ln(t))
    }

    /// The time `t` with `ln S(t | z) = log_survival` (`log_survival < 0`).
    pub fn time_at_log_survival(&self, log_survival: f64, z: &[f64]) -> f64 {
        exp((ln(-log_survival) - self.log_scale(z)) / self.rho)
    }
}

/// Semiparametric Cox margin: coefficients and the Breslow step function.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoxMargin {
    pub beta: Vec<f64>,
    /// Distinct event times, increasing.
    pub jump_times: Vec<f64>,
    /// Breslow increments at `jump_times`.
    pub jump_sizes: Vec<f64>,
    cumulative: Vec<f64>,
    pub iterations: usize,
}

impl CoxMargin {
    pub fn new(beta: Vec<f64>, jump_times: Vec<f64>, jump_sizes: Vec<f64>) -> Self {
        let mut acc = NeumaierSum::default();
        let cumulative = jump_sizes
            .iter()
            .map(|&d| {
                acc.add(d);
                acc.total()
            })
            .collect();
        CoxMargin { beta, jump_times, jump_sizes, cumulative, iterations: 0 }
    }

    /// Breslow `Lambda(t)`, right-continuous, constant after the last jump.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let n = self.jump_times.partition_point(|&u| u <= t);
        if n == 0 {
            0.0
        } else {
            self.cumulative[n - 1]
        }
    }

    pub fn log_survival(&self, t: f64, z: &[f64]) -> f64 {
        -exp(dot(&self.beta, z)) * self.cumulative_hazard(t)
    }
}

/// Either margin; the Cox margin has no density, and its likelihood terms use
/// the survival-only form.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginModel {
    Weibull(WeibullMargin),
    Cox(CoxMargin),
}

impl MarginModel {
    pub fn covariate_count(&self) -> usize {
        match self {
            MarginModel::Weibull(m) => m.beta.len(),
            MarginModel::Cox(m) => m.beta.len(),
        }
    }

    pub fn log_survival(&self, subject: &Subject) -> Result<f64> {
        match self {
            MarginModel::Weibull(m) => m.log_survival(subject.time, &subject.covariates),
            MarginModel::Cox(m) => Ok(m.log_survival(subject.time, &subject.covariates)),
        }
    }

    /// `ln f`, or `None` for the Cox margin.
    pub fn log_density(&self, subject: &Subject) -> Result<Option<f64>> {
        match self {
            MarginModel::Weibull(m) => m.log_density(subject.time, &subject.covariates).map(Some),
            MarginModel::Cox(_) => Ok(None),
        }
    }

    /// `(ln S, ln f)` in one pass; `ln f` only for uncensored subjects of a
    /// margin that has a density.
    #[inline]
    pub fn log_terms(&self, subject: &Subject) -> Result<(f64, Option<f64>)> {
        match self {
            MarginModel::Weibull(m) => {
                let t = subject.time;
                if !(t > 0.0) {
                    return Err(Error::Domain(alloc::format!("survival time must be > 0, got {t}")));
                }
                let ln_t = ln(t);
                let scale = m.log_scale(&subject.covariates);
                let log_s = -exp(scale + m.rho * ln_t);
                let log_f = subject.event.then(|| scale + ln(m.rho) + (m.rho - 1.0) * ln_t + log_s);
                Ok((log_s, log_f))
            }
            MarginModel::Cox(m) => Ok((m.log_survival(subject.time, &subject.covariates), None)),
        }
    }
}

impl From<WeibullMargin> for MarginModel {
    fn from(m: WeibullMargin) -> Self {
        MarginModel::Weibull(m)
    }
}

impl From<CoxMargin> for MarginModel {
    fn from(m: CoxMargin) -> Self {
        MarginModel::Cox(m)
    }
}

/// Plug-in marginal survival probability `H_ij` in `(0, 1]`.
pub fn plug_in_survival(margin: &MarginModel, subject: &Subject) -> Result<f64> {
    Ok(exp(margin.log_survival(subject)?))
}

// ---------------------------------------------------------------------------
// Weibull fit under working independence
// ---------------------------------------------------------------------------

/// Stage-one Weibull fit treating every subject as independent.
#[derive(Debug, Clone, PartialEq)]
pub struct WeibullFit {
    pub margin: WeibullMargin,
    /// Optimum in `(ln lambda, ln rho, beta...)`.
    pub params: Vec<f64>,
    pub loglik: f64,
    /// Per-cluster score vectors `U*_i` at the optimum.
    pub cluster_scores: Vec<Vec<f64>>,
    /// Observed information `I*`: minus the Hessian divided by `K`.
    pub info: Matrix,
    pub iterations: usize,
}

impl WeibullFit {
    /// `V = K^{-1} sum_i U*_i U*_i'`.
    pub fn score_covariance(&self) -> Matrix {
        let n = self.params.len();
        let k = self.cluster_scores.len() as f64;
        Matrix::from_fn(n, n, |a, b| {
            compensated_sum(self.cluster_scores.iter().map(|u| u[a] * u[b])) / k
        })
    }

    /// `(I*)^{-1} V (I*)^{-1}`, the per-cluster robust sandwich.
    pub fn sandwich(&self) -> Result<Matrix> {
        let inv = self.info.inverse()?;
        let mut s = inv.matmul(&self.score_covariance()).matmul(&inv);
        s.symmetrize();
        Ok(s)
    }

    /// Robust covariance of the parameter estimates: sandwich / K.
    pub fn robust_covariance(&self) -> Result<Matrix> {
        Ok(self.sandwich()?.scale(1.0 / self.cluster_scores.len() as f64))
    }
}

/// Per-subject log-likelihood contribution and score in `(ln lambda, ln rho, beta)`.
fn weibull_subject_terms(params: &[f64], s: &Subject, grad: Option<&mut [f64]>) -> f64 {
    let log_lambda = params[0];
    let rho = exp(params[1]);
    let beta = &params[2..];
    let ln_t = ln(s.time);
    let eta = log_lambda + dot(beta, &s.covariates);
    let u = exp(eta + rho * ln_t);
    let d = if s.event { 1.0 } else { 0.0 };
    if let Some(g) = grad {
        let r = d - u;
        g[0] += r;
        g[1] += d * (1.0 + rho * ln_t) - u * rho * ln_t;
        for (gk, z) in g[2..].iter_mut().zip(&s.covariates) {
            *gk += r * z;
        }
    }
    d * (eta + params[1] + (rho - 1.0) * ln_t) - u
}

/// Independence log-likelihood `sum delta log f + (1 - delta) log S` and its
/// analytic gradient in `(ln lambda, ln rho, beta)`.
pub fn weibull_independence_loglik(params: &[f64], data: &Dataset) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.len()];
    let mut acc = NeumaierSum::default();
    for s in data.subjects() {
        acc.add(weibull_subject_terms(params, s, Some(&mut grad)));
    }
    (acc.total(), grad)
}

pub fn fit_weibull_independence(data: &Dataset) -> Result<WeibullFit> {
    let events = data.n_events();
    if events == 0 {
        return Err(Error::Identifiability("no events observed; Weibull margin cannot be estimated".into()));
    }
    let p = data.covariate_count();
    let total_time: f64 = compensated_sum(data.subjects().map(|s| s.time));
    let mut x0 = vec![0.0; 2 + p];
    x0[0] = ln(events as f64 / total_time);
    let opts = Options::default();
    let objective = |x: &[f64]| {
        let (f, g) = weibull_independence_loglik(x, data);
        if f.is_finite() {
            Some((-f, g.into_iter().map(|v| -v).collect()))
        } else {
            None
        }
    };
    let mut min = optim::bfgs(objective, &x0, &opts)?;
    // Newton polish with the analytic gradient: BFGS can stall a hair above
    // the gradient threshold on large samples.
    for _ in 0..20 {
        if min.converged && optim::norm(&min.gradient) <= opts.grad_tol * 1e-2 {
            break;
        }
        let h = weibull_hessian(&min.x, data);
        let Ok(inv) = h.inverse() else { break };
        let (_, g) = weibull_independence_loglik(&min.x, data);
        let step = inv.mul_vec(&g);
        let trial: Vec<f64> = min.x.iter().zip(&step).map(|(x, s)| x - s).collect();
        let (ft, gt) = weibull_independence_loglik(&trial, data);
        if !ft.is_finite() || -ft > min.value + 1e-9 * abs(min.value) {
            break;
        }
        let gn = optim::norm(&gt);
        min.x = trial;
        min.value = -ft;
        min.gradient = gt.into_iter().map(|v| -v).collect();
        min.converged = gn <= opts.grad_tol;
        min.iterations += 1;
    }
    if !min.converged {
        return Err(Error::Convergence {
            iterations: min.iterations,
            grad_norm: min.grad_norm(),
            objective: -min.value,
        });
    }
    let params = min.x;
    let k = data.n_clusters() as f64;
    let cluster_scores = data
        .clusters()
        .iter()
        .map(|c| {
            let mut g = vec![0.0; params.len()];
            for s in &c.subjects {
                weibull_subject_terms(&params, s, Some(&mut g));
            }
            g
        })
        .collect();
    let info = weibull_hessian(&params, data).scale(-1.0 / k);
    Ok(WeibullFit {
        margin: WeibullMargin::from_params(&params),
        loglik: -min.value,
        params,
        cluster_scores,
        info,
        iterations: min.iterations,
    })
}

/// Hessian of the independence log-likelihood: central differences of the
/// analytic score.
fn weibull_hessian(params: &[f64], data: &Dataset) -> Matrix {
    let steps = optim::relative_steps(params, 1e-5);
    optim::fd_jacobian_of_gradient(|x| weibull_independence_loglik(x, data).1, params, &steps)
}

// ---------------------------------------------------------------------------
// Cox partial likelihood with Breslow ties
// ---------------------------------------------------------------------------

struct CoxDesign {
    /// Subjects sorted by decreasing time.
    times: Vec<f64>,
    events: Vec<bool>,
    z: Vec<Vec<f64>>,
    /// Column means, subtracted during the Newton iterations.
    centre: Vec<f64>,
}

impl CoxDesign {
    fn new(data: &Dataset) -> Self {
        let mut rows: Vec<&Subject> = data.subjects().collect();
        rows.sort_by(|a, b| b.time.total_cmp(&a.time));
        let p = data.covariate_count();
        let n = rows.len() as f64;
        let centre: Vec<f64> =
            (0..p).map(|k| compensated_sum(rows.iter().map(|s| s.covariates[k])) / n).collect();
        CoxDesign {
            times: rows.iter().map(|s| s.time).collect(),
            events: rows.iter().map(|s| s.event).collect(),
            z: rows
                .iter()
                .map(|s| s.covariates.iter().zip(&centre).map(|(z, c)| z - c).collect())
                .collect(),
            centre,
        }
    }

    /// Breslow partial log-likelihood, score and information at `beta`
    /// (centred covariates).
    fn evaluate(&self, beta: &[f64]) -> (f64, Vec<f64>, Matrix) {
        let p = beta.len();
        let n = self.times.len();
        let mut loglik = NeumaierSum::default();
        let mut score = vec![0.0; p];
        let mut info = Matrix::zeros(p, p);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = Matrix::zeros(p, p);
        let mut i = 0;
        while i < n {
            let t = self.times[i];
            let mut d = 0.0;
            let mut zsum = vec![0.0; p];
            let mut lin_sum = 0.0;
            while i < n && self.times[i] == t {
                let z = &self.z[i];
                let lp = dot(beta, z);
                let w = exp(lp);
                s0 += w;
                for a in 0..p {
                    s1[a] += w * z[a];
                    for b in 0..=a {
                        s2[(a, b)] += w * z[a] * z[b];
                    }
                }
                if self.events[i] {
                    d += 1.0;
                    lin_sum += lp;
                    for a in 0..p {
                        zsum[a] += z[a];
                    }
                }
                i += 1;
            }
            if d > 0.0 {
                loglik.add(lin_sum - d * ln(s0));
                for a in 0..p {
                    let ea = s1[a] / s0;
                    score[a] += zsum[a] - d * ea;
                    for b in 0..=a {
                        let v = d * (s2[(a, b)] / s0 - ea * s1[b] / s0);
                        info[(a, b)] += v;
                        if a != b {
                            info[(b, a)] += v;
                        }
                    }
                }
            }
        }
        (loglik.total(), score, info)
    }

    /// Breslow increments at distinct event times for the uncentred `beta`.
    fn breslow(&self, beta_centred: &[f64]) -> (Vec<f64>, Vec<f64>) {
        // exp(beta'z) = exp(beta'(z - c)) * exp(beta'c)
        let shift = exp(dot(beta_centred, &self.centre));
        let n = self.times.len();
        let mut times = Vec::new();
        let mut sizes = Vec::new();
        let mut s0 = 0.0;
        let mut i = 0;
        while i < n {
            let t = self.times[i];
            let mut d = 0.0;
            while i < n && self.times[i] == t {
                s0 += exp(dot(beta_centred, &self.z[i]));
                if self.events[i] {
                    d += 1.0;
                }
                i += 1;
            }
            if d > 0.0 {
                times.push(t);
                sizes.push(d / (s0 * shift));
            }
        }
        times.reverse();
        sizes.reverse();
        (times, sizes)
    }
}

/// Cox proportional hazards fit (Breslow ties) by Newton-Raphson with step
/// halving, followed by the Breslow cumulative baseline hazard.
pub fn fit_cox(data: &Dataset) -> Result<CoxMargin> {
    if data.n_events() == 0 {
        return Err(Error::Identifiability("no events observed; Cox margin cannot be estimated".into()));
    }
    let design = CoxDesign::new(data);
    let p = data.covariate_count();
    let mut beta = vec![0.0; p];
    let mut iterations = 0;
    if p > 0 {
        let (mut ll, mut score, mut info) = design.evaluate(&beta);
        let mut converged = false;
        while iterations < 200 {
            iterations += 1;
            let step = match info.inverse() {
                Ok(inv) => inv.mul_vec(&score),
                Err(_) => {
                    let worst = (0..p).max_by(|&a, &b| abs(score[a]).total_cmp(&abs(score[b]))).unwrap_or(0);
                    return Err(Error::Divergence { coefficient: worst });
                }
            };
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
                let (tl, ts, ti) = design.evaluate(&trial);
                if tl.is_finite() && tl >= ll - 1e-12 * abs(ll) {
                    accepted = Some((trial, tl, ts, ti));
                    break;
                }
                scale *= 0.5;
            }
            let Some((trial, tl, ts, ti)) = accepted else { break };
            let change = beta.iter().zip(&trial).fold(0.0, |m, (a, b)| f64::max(m, abs(a - b)));
            beta = trial;
            ll = tl;
            score = ts;
            info = ti;
            if let Some(k) = beta.iter().position(|b| abs(*b) > 50.0) {
                return Err(Error::Divergence { coefficient: k });
            }
            if change < 1e-8 && optim::norm(&score) < 1e-6 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence { iterations, grad_norm: optim::norm(&score), objective: ll });
        }
    }
    let (times, sizes) = design.breslow(&beta);
    let mut m = CoxMargin::new(beta, times, sizes);
    m.iterations = iterations;
    Ok(m)
}

/// Breslow partial log-likelihood at `beta`. Centring the covariates shifts
/// every linear predictor in a risk set by the same amount, so the value
/// equals the uncentred one.
pub fn cox_partial_loglik(data: &Dataset, beta: &[f64]) -> f64 {
    CoxDesign::new(data).evaluate(beta).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn subj(t: f64, e: bool, z: &[f64]) -> Subject {
        Subject::new(t, e, z.to_vec())
    }

    #[test]
    fn weibull_examples() {
        let m = WeibullMargin::new(1.0, 1.0, vec![0.0]).unwrap();
        assert!((m.log_survival(1.0, &[0.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(m.log_survival(1e-300, &[0.0]).unwrap().abs() < 1e-299);
        assert!((m.log_density(1.0, &[0.0]).unwrap() + 1.0).abs() < 1e-15);
        let m = WeibullMargin::new(0.0316, 1.5, vec![3.0]).unwrap();
        let expected = -0.0316 * 3.0f64.exp();
        assert!((m.log_survival(1.0, &[1.0]).unwrap() - expected).abs() < 1e-15);
        assert!(m.log_survival(0.0, &[1.0]).is_err());
        assert!(m.log_density(-1.0, &[1.0]).is_err());
    }

    #[test]
    fn weibull_density_is_hazard_times_survival() {
        let m = WeibullMargin::new(0.0316, 1.5, vec![3.0]).unwrap();
        for t in [0.1, 1.0, 4.0] {
            for z in [0.0, 1.0] {
                let lhs = m.log_density(t, &[z]).unwrap().exp();
                let rhs = m.hazard(t, &[z]) * m.log_survival(t, &[z]).unwrap().exp();
                assert!((lhs - rhs).abs() <= 1e-12 * rhs);
            }
        }
    }

    #[test]
    fn weibull_density_matches_fd_of_survival() {
        let m = WeibullMargin::new(0.5, 1.5, vec![0.4]).unwrap();
        let z = [1.0];
        for t in [0.3, 1.2, 2.5] {
            let h = 1e-5 * t;
            let s = |u: f64| m.log_survival(u, &z).unwrap().exp();
            let fd = -(s(t + h) - s(t - h)) / (2.0 * h);
            let f = m.log_density(t, &z).unwrap().exp();
            assert!((fd - f).abs() <= 1e-6 * f);
        }
    }

    #[test]
    fn inverse_time_matches_survival() {
        let m = WeibullMargin::new(0.0316, 1.5, vec![3.0]).unwrap();
        let t = m.time_at_log_survival(-0.7, &[1.0]);
        assert!((m.log_survival(t, &[1.0]).unwrap() + 0.7).abs() < 1e-14);
    }

    #[test]
    fn nelson_aalen_two_subjects() {
        let data = Dataset::new(
            vec![Cluster::new("a", vec![subj(1.0, true, &[])]), Cluster::new("b", vec![subj(2.0, true, &[])])],
            vec![],
        )
        .unwrap();
        let cox = fit_cox(&data).unwrap();
        assert!((cox.cumulative_hazard(1.0) - 0.5).abs() < 1e-15);
        assert!((cox.cumulative_hazard(2.0) - 1.5).abs() < 1e-15);
        assert_eq!(cox.cumulative_hazard(0.5), 0.0);
        assert!((cox.cumulative_hazard(10.0) - 1.5).abs() < 1e-15);
        let s = subj(1.5, false, &[]);
        let h = plug_in_survival(&MarginModel::Cox(cox), &s).unwrap();
        assert!((h - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn breslow_ties_share_the_risk_set() {
        // three subjects at t=1 (two events), one at t=2 (event)
        let data = Dataset::new(
            vec![Cluster::new(
                "a",
                vec![subj(1.0, true, &[]), subj(1.0, true, &[]), subj(1.0, false, &[]), subj(2.0, true, &[])],
            )],
            vec![],
        )
        .unwrap();
        let cox = fit_cox(&data).unwrap();
        assert_eq!(cox.jump_times, vec![1.0, 2.0]);
        assert!((cox.jump_sizes[0] - 0.5).abs() < 1e-15);
        assert!((cox.jump_sizes[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cox_score_vanishes_at_fit() {
        let clusters = (0..40)
            .map(|i| {
                let z = (i % 2) as f64;
                let t = 1.0 + ((i * 7919) % 97) as f64 / 10.0 / (1.0 + z);
                Cluster::new(i.to_string(), vec![subj(t, i % 5 != 0, &[z])])
            })
            .collect();
        let data = Dataset::new(clusters, vec!["z".into()]).unwrap();
        let cox = fit_cox(&data).unwrap();
        let h = 1e-6;
        let fd = (cox_partial_loglik(&data, &[cox.beta[0] + h]) - cox_partial_loglik(&data, &[cox.beta[0] - h]))
            / (2.0 * h);
        assert!(fd.abs() < 1e-6, "score {fd}");
    }

    #[test]
    fn separated_data_diverges() {
        let clusters = (0..20)
            .map(|i| {
                let z = if i < 10 { 1.0 } else { 0.0 };
                let t = if i < 10 { 1.0 + i as f64 * 0.01 } else { 5.0 + i as f64 };
                Cluster::new(alloc::format!("{i:02}"), vec![subj(t, true, &[z])])
            })
            .collect();
        let data = Dataset::new(clusters, vec!["z".into()]).unwrap();
        assert!(matches!(fit_cox(&data), Err(Error::Divergence { .. }) | Err(Error::Convergence { .. })));
    }

    #[test]
    fn no_events_is_unidentifiable() {
        let data = Dataset::new(vec![Cluster::new("a", vec![subj(1.0, false, &[])])], vec![]).unwrap();
        assert!(matches!(fit_weibull_independence(&data), Err(Error::Identifiability(_))));
        assert!(matches!(fit_cox(&data), Err(Error::Identifiability(_))));
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], vec![]).is_err());
        assert!(Dataset::new(vec![Cluster::new("a", vec![])], vec![]).is_err());
        assert!(Dataset::new(vec![Cluster::new("a", vec![subj(0.0, true, &[])])], vec![]).is_err());
        assert!(Dataset::new(vec![Cluster::new("a", vec![subj(1.0, true, &[1.0])])], vec![]).is_err());
        let dup = vec![Cluster::new("a", vec![subj(1.0, true, &[])]), Cluster::new("a", vec![subj(2.0, true, &[])])];
        assert!(Dataset::new(dup, vec![]).is_err());
    }

    #[test]
    fn dataset_sorts_by_id() {
        let d = Dataset::new(
            vec![Cluster::new("b", vec![subj(1.0, true, &[])]), Cluster::new("a", vec![subj(2.0, false, &[])])],
            vec![],
        )
        .unwrap();
        assert_eq!(d.clusters()[0].id, "a");
        assert_eq!(d.n_events(), 1);
        assert_eq!(d.max_events(), 1);
    }
}
