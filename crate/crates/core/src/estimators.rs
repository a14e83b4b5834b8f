//! One-stage, two-stage parametric and two-stage semiparametric estimation
//! of the copula parameter, with their standard errors.
//!
//! Parameters are optimised on an unconstrained scale: `ln lambda`, `ln rho`
//! and `eta` (log theta for Clayton and inverse Gaussian, logit theta for
//! Gumbel-Hougaard). Standard errors are reported on the natural scale via the
//! delta method.
//!
//! | method        | margins                         | SE of theta                          |
//! |---------------|---------------------------------|--------------------------------------|
//! | one-stage     | Weibull, joint with theta       | inverse observed information         |
//! | two-stage     | Weibull under independence      | `1/I_tt + I_tb S I_bt / I_tt^2`      |
//! | semiparam     | Cox + Breslow plug-in           | grouped jackknife over clusters      |

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::generators::{CoefficientTable, Family, Generator};
use crate::likelihood::{self, total_loglik};
use crate::linalg::Matrix;
use crate::margins::{self, Dataset, MarginModel, WeibullFit, WeibullMargin};
use crate::math::{abs, ln, logit, sqrt};
use crate::optim::{self, Options};

/// Relative step for finite-difference Hessians of the copula log-likelihood.
pub const HESSIAN_STEP: f64 = 1e-4;
/// Relative step for the five-point gradient used by the one-stage optimiser.
pub const GRADIENT_STEP: f64 = 1e-3;
/// Score norm below which a fit counts as stationary.
pub const SCORE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Method {
    #[cfg_attr(feature = "serde", serde(rename = "one-stage"))]
    OneStageParametric,
    #[cfg_attr(feature = "serde", serde(rename = "two-stage"))]
    TwoStageParametric,
    #[cfg_attr(feature = "serde", serde(rename = "semiparam"))]
    TwoStageSemiparametric,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::OneStageParametric, Method::TwoStageParametric, Method::TwoStageSemiparametric];

    pub fn name(self) -> &'static str {
        match self {
            Method::OneStageParametric => "one-stage",
            Method::TwoStageParametric => "two-stage",
            Method::TwoStageSemiparametric => "semiparam",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-stage" | "onestage" => Ok(Method::OneStageParametric),
            "two-stage" | "twostage" => Ok(Method::TwoStageParametric),
            "semiparam" | "semiparametric" => Ok(Method::TwoStageSemiparametric),
            other => Err(Error::Domain(alloc::format!(
                "unknown method '{other}' (expected one-stage, two-stage or semiparam)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SeMethod {
    Hessian,
    Sandwich,
    Jackknife,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FitReport {
    pub method: Method,
    pub family: Family,
    pub estimates: BTreeMap<String, f64>,
    pub standard_errors: BTreeMap<String, f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub se_method: SeMethod,
    /// Norm of the finite-difference score at the reported optimum, on the
    /// optimiser's scale.
    pub score_norm: f64,
    /// Whether the finite-difference Hessian at the optimum is negative
    /// definite on the optimiser's scale.
    pub hessian_negative_definite: bool,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn theta(&self) -> f64 {
        self.estimates["theta"]
    }

    pub fn theta_se(&self) -> Option<f64> {
        self.standard_errors.get("theta").copied()
    }
}

/// Blocks of the per-cluster information matrix of `(beta, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationBlocks {
    pub i_bb: Matrix,
    pub i_bt: Vec<f64>,
    pub i_tt: f64,
}

impl InformationBlocks {
    /// Split a full information matrix whose last coordinate is theta.
    pub fn from_full(info: &Matrix) -> Self {
        let n = info.rows();
        let b: Vec<usize> = (0..n - 1).collect();
        InformationBlocks {
            i_bb: info.select(&b, &b),
            i_bt: b.iter().map(|&i| info[(i, n - 1)]).collect(),
            i_tt: info[(n - 1, n - 1)],
        }
    }

    pub fn to_full(&self) -> Matrix {
        let p = self.i_bt.len();
        Matrix::from_fn(p + 1, p + 1, |i, j| match (i < p, j < p) {
            (true, true) => self.i_bb[(i, j)],
            (true, false) => self.i_bt[i],
            (false, true) => self.i_bt[j],
            (false, false) => self.i_tt,
        })
    }
}

/// `Var(theta_hat) = 1/I_tt + I_tb (I^{-1})_bb I_bt / I_tt^2`, where
/// `(I^{-1})_bb` is the beta block of the inverse of the full information.
pub fn one_stage_variance(blocks: &InformationBlocks) -> Result<f64> {
    if !(blocks.i_tt > 0.0) {
        return Err(Error::Numerical(alloc::format!("I_tt = {} is not positive", blocks.i_tt)));
    }
    blocks.i_bb.inverse()?;
    let inv = blocks.to_full().inverse()?;
    let p = blocks.i_bt.len();
    let idx: Vec<usize> = (0..p).collect();
    let inv_bb = inv.select(&idx, &idx);
    let v = 1.0 / blocks.i_tt + inv_bb.quad_form(&blocks.i_bt) / (blocks.i_tt * blocks.i_tt);
    if !(v >= 0.0) {
        return Err(Error::Numerical(alloc::format!("negative variance {v}")));
    }
    Ok(v)
}

/// `Var(theta_bar) = 1/I_tt + I_tb S I_bt / I_tt^2` with `S` the stage-one
/// sandwich `(I*)^{-1} V (I*)^{-1}`.
pub fn two_stage_variance(i_tt: f64, i_bt: &[f64], sandwich: &Matrix) -> Result<f64> {
    if !(i_tt > 0.0) {
        return Err(Error::Numerical(alloc::format!("I_tt = {i_tt} is not positive")));
    }
    let v = 1.0 / i_tt + sandwich.quad_form(i_bt) / (i_tt * i_tt);
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Numerical(alloc::format!("variance {v} from formula is invalid; Hessian suspect")));
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Likelihood plumbing
// ---------------------------------------------------------------------------

/// Coefficient tables for a family: fixed alpha for Clayton and inverse
/// Gaussian, rebuilt per theta for Gumbel-Hougaard.
#[derive(Debug, Clone)]
struct Tables {
    max_order: usize,
    fixed: Option<CoefficientTable>,
}

impl Tables {
    fn new(family: Family, data: &Dataset) -> Result<Self> {
        let max_order = data.max_events().max(1);
        let fixed = match family {
            Family::GumbelHougaard => None,
            _ => Some(CoefficientTable::new(max_order, family.table_alpha(1.0))?),
        };
        Ok(Tables { max_order, fixed })
    }

    fn get(&self, gen: &Generator) -> Result<Cow<'_, CoefficientTable>> {
        match &self.fixed {
            Some(t) => Ok(Cow::Borrowed(t)),
            None => Ok(Cow::Owned(CoefficientTable::new(self.max_order, gen.table_alpha())?)),
        }
    }
}

struct CopulaModel<'a> {
    family: Family,
    data: &'a Dataset,
    tables: Tables,
}

impl<'a> CopulaModel<'a> {
    fn new(family: Family, data: &'a Dataset) -> Result<Self> {
        Ok(CopulaModel { family, data, tables: Tables::new(family, data)? })
    }

    fn loglik(&self, margin: &MarginModel, eta: f64) -> Result<f64> {
        let gen = Generator::new(self.family, self.family.from_unconstrained(eta))?;
        let table = self.tables.get(&gen)?;
        total_loglik(&gen, margin, self.data, &table)
    }

    /// Log-likelihood at `(ln lambda, ln rho, beta..., eta)`; `-inf` where it
    /// cannot be evaluated.
    fn loglik_weibull(&self, x: &[f64]) -> f64 {
        let n = x.len();
        let margin = MarginModel::Weibull(WeibullMargin::from_params(&x[..n - 1]));
        match self.loglik(&margin, x[n - 1]) {
            Ok(v) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        }
    }

    fn gradient_weibull(&self, x: &[f64]) -> Vec<f64> {
        let steps = optim::relative_steps(x, GRADIENT_STEP);
        optim::fd_gradient5(|p| self.loglik_weibull(p), x, &steps)
    }

    fn hessian_weibull(&self, x: &[f64]) -> Matrix {
        let steps = optim::relative_steps(x, HESSIAN_STEP);
        optim::fd_hessian(|p| self.loglik_weibull(p), x, &steps)
    }
}

/// Unconstrained search interval for `eta`.
pub fn eta_bounds(family: Family) -> (f64, f64) {
    match family {
        Family::Clayton | Family::InverseGaussian => (ln(1e-4), ln(50.0)),
        Family::GumbelHougaard => (logit(1e-3), logit(1.0 - 1e-6)),
    }
}

const BOUNDARY_MARGIN: f64 = 1e-3;

fn near_boundary(family: Family, eta: f64) -> bool {
    let (lo, hi) = eta_bounds(family);
    eta - lo < BOUNDARY_MARGIN || hi - eta < BOUNDARY_MARGIN
}

fn boundary_warning(family: Family, theta: f64) -> String {
    alloc::format!("theta = {theta:.6} lies at the boundary of the {family} search range (independence or degenerate dependence)")
}

/// Maximiser of the log-likelihood in theta with the margin held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFit {
    pub theta: f64,
    pub eta: f64,
    pub loglik: f64,
    pub evaluations: usize,
    pub at_boundary: bool,
}

/// Maximise `theta -> loglik(theta; margin)`: an 8-point grid in `eta`
/// seeds Brent's method on the bracket around the best grid point, then a
/// few Newton steps on the five-point score tighten the root.
pub fn maximize_theta(family: Family, margin: &MarginModel, data: &Dataset) -> Result<ThetaFit> {
    let model = CopulaModel::new(family, data)?;
    maximize_theta_with(&model, margin)
}

fn maximize_theta_with(model: &CopulaModel<'_>, margin: &MarginModel) -> Result<ThetaFit> {
    let family = model.family;
    let (lo, hi) = eta_bounds(family);
    let eval = |eta: f64| match model.loglik(margin, eta) {
        Ok(v) if v.is_finite() => v,
        _ => f64::NEG_INFINITY,
    };
    const GRID: usize = 8;
    let grid: Vec<f64> = (0..GRID).map(|i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&e| eval(e)).collect();
    let mut evaluations = GRID;
    let best = (0..GRID).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    if values[best] == f64::NEG_INFINITY {
        // surface the underlying error
        model.loglik(margin, grid[best])?;
        return Err(Error::Numerical("log-likelihood is not finite anywhere on the theta grid".into()));
    }
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(GRID - 1)];
    let (mut eta, neg, n) = optim::brent_minimize(|e| -eval(e), a, b, 1e-10);
    evaluations += n;
    let mut ll = -neg;
    if values[best] > ll {
        eta = grid[best];
        ll = values[best];
    }
    if !near_boundary(family, eta) {
        // Newton on the score in eta
        for _ in 0..4 {
            let h = 1e-3;
            let f = [eval(eta + 2.0 * h), eval(eta + h), eval(eta - h), eval(eta - 2.0 * h)];
            evaluations += 4;
            let score = (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h);
            let curv = (-f[0] + 16.0 * f[1] - 30.0 * ll + 16.0 * f[2] - f[3]) / (12.0 * h * h);
            if !(curv < 0.0) || abs(score) < 1e-9 {
                break;
            }
            let next = eta - score / curv;
            if !(next > lo && next < hi) || abs(next - eta) > 0.1 {
                break;
            }
            let v = eval(next);
            evaluations += 1;
            if !(v >= ll - 1e-9 * abs(ll)) {
                break;
            }
            eta = next;
            ll = v;
        }
    }
    Ok(ThetaFit {
        theta: family.from_unconstrained(eta),
        eta,
        loglik: ll,
        evaluations,
        at_boundary: near_boundary(family, eta),
    })
}

fn require_clustering(data: &Dataset) -> Result<()> {
    let multi = data.clusters().iter().filter(|c| c.len() >= 2).count();
    if multi < 2 {
        return Err(Error::Identifiability(alloc::format!(
            "theta needs at least two clusters with two or more subjects ({multi} found)"
        )));
    }
    Ok(())
}

fn weibull_names(data: &Dataset) -> Vec<String> {
    let mut names = vec!["lambda".to_string(), "rho".to_string()];
    names.extend(beta_names(data));
    names
}

fn beta_names(data: &Dataset) -> Vec<String> {
    data.covariate_names().iter().map(|n| alloc::format!("beta[{n}]")).collect()
}

/// Natural-scale estimates and delta-method SEs of the Weibull coordinates.
fn weibull_natural(params: &[f64], cov: Option<&Matrix>, names: &[String], est: &mut BTreeMap<String, f64>, se: &mut BTreeMap<String, f64>) {
    let m = WeibullMargin::from_params(params);
    for (i, name) in names.iter().enumerate() {
        let (value, jac) = match i {
            0 => (m.lambda, m.lambda),
            1 => (m.rho, m.rho),
            _ => (params[i], 1.0),
        };
        est.insert(name.clone(), value);
        if let Some(c) = cov {
            let v = c[(i, i)];
            if v >= 0.0 {
                se.insert(name.clone(), abs(jac) * sqrt(v));
            }
        }
    }
}

fn negative_definite(h: &Matrix) -> bool {
    h.symmetric_eigenvalues().iter().all(|&e| e < 0.0)
}

// ---------------------------------------------------------------------------
// Two-stage parametric
// ---------------------------------------------------------------------------

/// Two-stage parametric fit together with its stage-one output.
#[derive(Debug, Clone)]
pub struct TwoStageFit {
    pub report: FitReport,
    pub stage_one: WeibullFit,
    pub theta: ThetaFit,
    /// Per-cluster information blocks of the full log-likelihood at
    /// `(beta_bar, theta_bar)`, on the optimiser's scale.
    pub blocks: InformationBlocks,
}

pub fn fit_two_stage_parametric(family: Family, data: &Dataset) -> Result<FitReport> {
    fit_two_stage_parametric_detailed(family, data).map(|f| f.report)
}

pub fn fit_two_stage_parametric_detailed(family: Family, data: &Dataset) -> Result<TwoStageFit> {
    require_clustering(data)?;
    let stage_one = margins::fit_weibull_independence(data)?;
    let model = CopulaModel::new(family, data)?;
    let margin = MarginModel::Weibull(stage_one.margin.clone());
    let theta = maximize_theta_with(&model, &margin)?;
    let k = data.n_clusters() as f64;

    let mut x = stage_one.params.clone();
    x.push(theta.eta);
    let hessian = model.hessian_weibull(&x);
    let info = hessian.scale(-1.0 / k);
    let blocks = InformationBlocks::from_full(&info);

    let mut warnings = Vec::new();
    if theta.at_boundary {
        warnings.push(boundary_warning(family, theta.theta));
    }
    let mut est = BTreeMap::new();
    let mut se = BTreeMap::new();
    let robust = stage_one.robust_covariance()?;
    weibull_natural(&stage_one.params, Some(&robust), &weibull_names(data), &mut est, &mut se);
    est.insert("theta".into(), theta.theta);
    let sandwich = stage_one.sandwich()?;
    match two_stage_variance(blocks.i_tt, &blocks.i_bt, &sandwich) {
        Ok(v) => {
            let var_eta = v / k;
            se.insert("theta".into(), family.theta_jacobian(theta.eta) * sqrt(var_eta));
        }
        Err(e) => warnings.push(alloc::format!("no standard error for theta: {e}")),
    }
    let steps = optim::relative_steps(&[theta.eta], GRADIENT_STEP);
    let score = optim::fd_gradient5(|e| model.loglik(&margin, e[0]).unwrap_or(f64::NAN), &[theta.eta], &steps)[0];
    let report = FitReport {
        method: Method::TwoStageParametric,
        family,
        estimates: est,
        standard_errors: se,
        loglik: theta.loglik,
        converged: true,
        iterations: stage_one.iterations + theta.evaluations,
        se_method: SeMethod::Sandwich,
        score_norm: abs(score),
        hessian_negative_definite: blocks.i_tt > 0.0,
        warnings,
    };
    Ok(TwoStageFit { report, stage_one, theta, blocks })
}

// ---------------------------------------------------------------------------
// One-stage parametric
// ---------------------------------------------------------------------------

/// Starting point for the one-stage optimiser on the natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStageInit {
    pub margin: WeibullMargin,
    pub theta: f64,
}

pub fn fit_one_stage(family: Family, data: &Dataset, init: Option<OneStageInit>) -> Result<FitReport> {
    require_clustering(data)?;
    let mut warnings = Vec::new();
    let (x0, seed_iterations) = match init {
        Some(i) => {
            if !family.contains(i.theta) {
                return Err(Error::ParameterDomain { family, theta: i.theta });
            }
            if i.margin.beta.len() != data.covariate_count() {
                return Err(Error::InvalidData("initial margin has the wrong number of coefficients".into()));
            }
            let mut x = i.margin.to_params();
            x.push(family.to_unconstrained(i.theta));
            (x, 0)
        }
        None => {
            let two = fit_two_stage_parametric_detailed(family, data)?;
            let mut x = two.stage_one.params.clone();
            x.push(two.theta.eta);
            (x, two.report.iterations)
        }
    };
    let model = CopulaModel::new(family, data)?;
    let n = x0.len();
    let (lo, hi) = eta_bounds(family);
    let objective = |x: &[f64]| {
        if !(x[n - 1] >= lo && x[n - 1] <= hi) {
            return None;
        }
        let f = model.loglik_weibull(x);
        if !f.is_finite() {
            return None;
        }
        let g = model.gradient_weibull(x);
        Some((-f, g.into_iter().map(|v| -v).collect()))
    };
    let opts = Options { max_iter: 200, grad_tol: SCORE_TOL, step_tol: 1e-8 };
    let min = optim::bfgs(objective, &x0, &opts)?;
    let mut x = min.x;
    let mut iterations = seed_iterations + min.iterations;
    let mut grad = model.gradient_weibull(&x);
    let mut hessian = model.hessian_weibull(&x);
    // Newton polish: BFGS line searches stall once improvements drop below
    // the rounding noise of the log-likelihood.
    for _ in 0..6 {
        if optim::norm(&grad) <= SCORE_TOL {
            break;
        }
        let Ok(inv) = hessian.inverse() else { break };
        let step = inv.mul_vec(&grad);
        let trial: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a - s).collect();
        if !(trial[n - 1] >= lo && trial[n - 1] <= hi) {
            break;
        }
        let g_trial = model.gradient_weibull(&trial);
        if !(optim::norm(&g_trial) < optim::norm(&grad)) {
            break;
        }
        x = trial;
        grad = g_trial;
        hessian = model.hessian_weibull(&x);
        iterations += 1;
    }
    let score_norm = optim::norm(&grad);
    let at_boundary = near_boundary(family, x[n - 1]);
    let converged = score_norm <= SCORE_TOL || at_boundary;
    if !converged {
        return Err(Error::Convergence { iterations, grad_norm: score_norm, objective: model.loglik_weibull(&x) });
    }
    let theta = family.from_unconstrained(x[n - 1]);
    if at_boundary {
        warnings.push(boundary_warning(family, theta));
    }
    let neg_def = negative_definite(&hessian);
    if !neg_def {
        warnings.push("Hessian at the one-stage optimum is not negative definite".into());
    }
    let k = data.n_clusters() as f64;
    let mut est = BTreeMap::new();
    let mut se = BTreeMap::new();
    let info = hessian.scale(-1.0 / k);
    let cov = info.inverse().ok().map(|inv| inv.scale(1.0 / k));
    weibull_natural(&x[..n - 1], cov.as_ref(), &weibull_names(data), &mut est, &mut se);
    est.insert("theta".into(), theta);
    if neg_def {
        match one_stage_variance(&InformationBlocks::from_full(&info)) {
            Ok(v) => {
                se.insert("theta".into(), family.theta_jacobian(x[n - 1]) * sqrt(v / k));
            }
            Err(e) => warnings.push(alloc::format!("no standard error for theta: {e}")),
        }
    }
    Ok(FitReport {
        method: Method::OneStageParametric,
        family,
        estimates: est,
        standard_errors: se,
        loglik: model.loglik_weibull(&x),
        converged,
        iterations,
        se_method: SeMethod::Hessian,
        score_norm,
        hessian_negative_definite: neg_def,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Two-stage semiparametric and the grouped jackknife
// ---------------------------------------------------------------------------

/// Contiguous groups of cluster positions (id order), `groups` of them.
pub fn jackknife_groups(n_clusters: usize, groups: usize) -> Result<Vec<Vec<usize>>> {
    if groups < 2 || groups > n_clusters {
        return Err(Error::Domain(alloc::format!(
            "jackknife needs 2 <= groups <= clusters (groups = {groups}, clusters = {n_clusters})"
        )));
    }
    Ok((0..groups).map(|g| ((g * n_clusters / groups)..((g + 1) * n_clusters / groups)).collect()).collect())
}

/// Outcome of a grouped jackknife over a vector of statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Jackknife {
    pub standard_errors: Vec<f64>,
    pub used: usize,
    pub failed: usize,
    pub warnings: Vec<String>,
}

/// Combine deletion estimates into jackknife SEs,
/// `sqrt((m - 1)/m * sum_k (est_k - mean)^2)` over the `m` successful refits.
/// Up to 5% of refits may fail; they are dropped with a warning.
pub fn jackknife_from_refits(refits: &[Result<Vec<f64>>]) -> Result<Jackknife> {
    let total = refits.len();
    let ok: Vec<&Vec<f64>> = refits.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failed = total - ok.len();
    if failed as f64 >= 0.05 * total as f64 && failed > 0 || ok.len() < 2 {
        return Err(Error::Jackknife { failed, total });
    }
    let mut warnings = Vec::new();
    if failed > 0 {
        let reasons: Vec<String> = refits
            .iter()
            .enumerate()
            .filter_map(|(g, r)| r.as_ref().err().map(|e| alloc::format!("group {g}: {e}")))
            .collect();
        warnings.push(alloc::format!("{failed} of {total} jackknife refits failed and were excluded ({})", reasons.join("; ")));
    }
    let m = ok.len() as f64;
    let dim = ok[0].len();
    let standard_errors = (0..dim)
        .map(|i| {
            let mean = ok.iter().map(|v| v[i]).sum::<f64>() / m;
            let ss: f64 = ok.iter().map(|v| (v[i] - mean) * (v[i] - mean)).sum();
            sqrt((m - 1.0) / m * ss)
        })
        .collect();
    Ok(Jackknife { standard_errors, used: ok.len(), failed, warnings })
}

/// Grouped jackknife SE of a scalar statistic: `refit` receives the dataset
/// with one group of clusters deleted.
pub fn grouped_jackknife_se<F>(data: &Dataset, groups: usize, mut refit: F) -> Result<Jackknife>
where
    F: FnMut(&Dataset) -> Result<f64>,
{
    let refits: Vec<Result<Vec<f64>>> = jackknife_groups(data.n_clusters(), groups)?
        .iter()
        .map(|g| data.without_clusters(g).and_then(|d| refit(&d)).map(|v| vec![v]))
        .collect();
    jackknife_from_refits(&refits)
}

/// Semiparametric point estimate: Cox coefficients followed by theta.
pub fn semiparametric_estimate(family: Family, data: &Dataset) -> Result<(Vec<f64>, ThetaFit)> {
    let cox = margins::fit_cox(data)?;
    let beta = cox.beta.clone();
    let theta = maximize_theta(family, &MarginModel::Cox(cox), data)?;
    Ok((beta, theta))
}

/// One jackknife deletion for the semiparametric estimator: both stages are
/// refitted without the clusters in `drop`. Returns `[beta..., theta]`.
pub fn semiparametric_refit(family: Family, data: &Dataset, drop: &[usize]) -> Result<Vec<f64>> {
    let reduced = data.without_clusters(drop)?;
    let (mut beta, theta) = semiparametric_estimate(family, &reduced)?;
    beta.push(theta.theta);
    Ok(beta)
}

pub fn fit_two_stage_semiparametric(family: Family, data: &Dataset, jackknife_groups: Option<usize>) -> Result<FitReport> {
    fit_two_stage_semiparametric_with(family, data, jackknife_groups, |groups, refit| {
        groups.iter().map(|g| refit(g)).collect()
    })
}

/// As [`fit_two_stage_semiparametric`], with the jackknife refits evaluated by
/// `map_groups` (for instance on a thread pool). `map_groups` must return the
/// results in group order.
pub fn fit_two_stage_semiparametric_with<M>(
    family: Family,
    data: &Dataset,
    groups: Option<usize>,
    map_groups: M,
) -> Result<FitReport>
where
    M: FnOnce(&[Vec<usize>], &(dyn Fn(&[usize]) -> Result<Vec<f64>> + Sync)) -> Vec<Result<Vec<f64>>>,
{
    require_clustering(data)?;
    let cox = margins::fit_cox(data)?;
    let cox_iterations = cox.iterations;
    let beta = cox.beta.clone();
    let margin = MarginModel::Cox(cox);
    let model = CopulaModel::new(family, data)?;
    let theta = maximize_theta_with(&model, &margin)?;
    let g = groups.unwrap_or(data.n_clusters());
    let partition = jackknife_groups(data.n_clusters(), g)?;
    let refit = |drop: &[usize]| semiparametric_refit(family, data, drop);
    let refits = map_groups(&partition, &refit);
    let jk = jackknife_from_refits(&refits)?;

    let mut warnings = jk.warnings.clone();
    if theta.at_boundary {
        warnings.push(boundary_warning(family, theta.theta));
    }
    let mut est = BTreeMap::new();
    let mut se = BTreeMap::new();
    for (i, name) in beta_names(data).into_iter().enumerate() {
        est.insert(name.clone(), beta[i]);
        se.insert(name, jk.standard_errors[i]);
    }
    est.insert("theta".into(), theta.theta);
    se.insert("theta".into(), jk.standard_errors[beta.len()]);
    let steps = optim::relative_steps(&[theta.eta], GRADIENT_STEP);
    let score = optim::fd_gradient5(|e| model.loglik(&margin, e[0]).unwrap_or(f64::NAN), &[theta.eta], &steps)[0];
    let curvature = {
        let h = HESSIAN_STEP;
        let f0 = theta.loglik;
        let up = model.loglik(&margin, theta.eta + h).unwrap_or(f64::NAN);
        let down = model.loglik(&margin, theta.eta - h).unwrap_or(f64::NAN);
        (up - 2.0 * f0 + down) / (h * h)
    };
    Ok(FitReport {
        method: Method::TwoStageSemiparametric,
        family,
        estimates: est,
        standard_errors: se,
        loglik: theta.loglik,
        converged: true,
        iterations: cox_iterations + theta.evaluations,
        se_method: SeMethod::Jackknife,
        score_norm: abs(score),
        hessian_negative_definite: curvature < 0.0,
        warnings,
    })
}

/// Dispatch on the estimation method with default settings.
pub fn fit(method: Method, family: Family, data: &Dataset, jackknife_groups: Option<usize>) -> Result<FitReport> {
    match method {
        Method::OneStageParametric => fit_one_stage(family, data, None),
        Method::TwoStageParametric => fit_two_stage_parametric(family, data),
        Method::TwoStageSemiparametric => fit_two_stage_semiparametric(family, data, jackknife_groups),
    }
}

/// Log-likelihood of the copula model with a Weibull margin at natural
/// parameters; convenience for diagnostics.
pub fn weibull_copula_loglik(family: Family, theta: f64, margin: &WeibullMargin, data: &Dataset) -> Result<f64> {
    likelihood::loglik_at_theta(family, theta, &MarginModel::Weibull(margin.clone()), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_stage_variance_hand_example() {
        // I = [[2, 1], [1, 1]] with beta first: inverse has (theta, theta) = 2
        let blocks = InformationBlocks { i_bb: Matrix::from_rows(&[vec![2.0]]), i_bt: vec![1.0], i_tt: 1.0 };
        assert!((one_stage_variance(&blocks).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn orthogonal_blocks_reduce_to_inverse_i_tt() {
        let blocks = InformationBlocks { i_bb: Matrix::identity(2).scale(3.0), i_bt: vec![0.0, 0.0], i_tt: 4.0 };
        assert_eq!(one_stage_variance(&blocks).unwrap(), 0.25);
        let s = Matrix::identity(2);
        assert_eq!(two_stage_variance(4.0, &[0.0, 0.0], &s).unwrap(), 0.25);
    }

    #[test]
    fn two_stage_with_model_based_sandwich() {
        // V = I* gives sandwich (I*)^{-1}
        let i_star = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let inv = i_star.inverse().unwrap();
        let i_bt = [0.3, -0.2];
        let v = two_stage_variance(1.5, &i_bt, &inv).unwrap();
        let expected = 1.0 / 1.5 + inv.quad_form(&i_bt) / (1.5 * 1.5);
        assert!((v - expected).abs() < 1e-15);
        assert!(v >= 1.0 / 1.5);
    }

    #[test]
    fn variance_errors() {
        let s = Matrix::identity(1);
        assert!(two_stage_variance(0.0, &[1.0], &s).is_err());
        let bad = Matrix::from_rows(&[vec![-100.0]]);
        assert!(two_stage_variance(1.0, &[1.0], &bad).is_err());
        let singular = InformationBlocks { i_bb: Matrix::zeros(1, 1), i_bt: vec![0.0], i_tt: 1.0 };
        assert_eq!(one_stage_variance(&singular), Err(Error::Singular));
    }

    #[test]
    fn jackknife_groups_partition_in_order() {
        let g = jackknife_groups(10, 3).unwrap();
        assert_eq!(g, vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8, 9]]);
        let loo = jackknife_groups(4, 4).unwrap();
        assert_eq!(loo, vec![vec![0], vec![1], vec![2], vec![3]]);
        assert!(jackknife_groups(4, 1).is_err());
        assert!(jackknife_groups(4, 5).is_err());
    }

    #[test]
    fn constant_refits_give_zero_se() {
        let refits: Vec<Result<Vec<f64>>> = (0..5).map(|_| Ok(vec![0.7])).collect();
        let jk = jackknife_from_refits(&refits).unwrap();
        assert_eq!(jk.standard_errors, vec![0.0]);
    }

    #[test]
    fn jackknife_failure_policy() {
        let mut refits: Vec<Result<Vec<f64>>> = (0..40).map(|i| Ok(vec![i as f64])).collect();
        refits[3] = Err(Error::Singular);
        let jk = jackknife_from_refits(&refits).unwrap();
        assert_eq!(jk.failed, 1);
        assert_eq!(jk.used, 39);
        assert_eq!(jk.warnings.len(), 1);
        refits[4] = Err(Error::Singular);
        assert!(matches!(jackknife_from_refits(&refits), Err(Error::Jackknife { failed: 2, total: 40 })));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }
}
