use copulasurv_core::estimators::{
    fit_one_stage, fit_two_stage_parametric, fit_two_stage_parametric_detailed, fit_two_stage_semiparametric,
    grouped_jackknife_se, jackknife_groups, maximize_theta, one_stage_variance, two_stage_variance, InformationBlocks,
    OneStageInit,
};
use copulasurv_core::likelihood::{loglik_at_theta, profile_score_theta};
use copulasurv_core::linalg::Matrix;
use copulasurv_core::margins::fit_weibull_independence;
use copulasurv_core::optim::brent_minimize;
use copulasurv_core::simulation::{generate_dataset, SimulationConfig};
use copulasurv_core::{Cluster, Dataset, Error, Family, MarginModel, SeMethod};
use proptest::prelude::*;

fn sim(family: Family, theta0: f64, k: usize, seed: u64) -> (SimulationConfig, Dataset) {
    let cfg = SimulationConfig { family, theta0, n_clusters: k, seed, ..Default::default() };
    let data = generate_dataset(&cfg, 0).unwrap();
    (cfg, data)
}

fn spd(n: usize, entries: &[f64]) -> Matrix {
    // A A' + n I is symmetric positive definite
    let a = Matrix::from_fn(n, n, |i, j| entries[i * n + j]);
    let mut m = a.matmul(&a.transpose());
    for i in 0..n {
        m = Matrix::from_fn(n, n, |r, c| m[(r, c)] + if r == c && r == i { n as f64 } else { 0.0 });
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn one_stage_variance_is_inverse_theta_element(n in 2usize..6, entries in prop::collection::vec(-2.0f64..2.0, 36)) {
        let full = spd(n, &entries);
        let blocks = InformationBlocks::from_full(&full);
        let v = one_stage_variance(&blocks).unwrap();
        let direct = full.inverse().unwrap()[(n - 1, n - 1)];
        prop_assert!((v - direct).abs() <= 1e-10 * direct.abs().max(1.0), "{} vs {}", v, direct);
    }

    #[test]
    fn two_stage_variance_dominates_inverse_i_tt(
        i_tt in 0.1f64..10.0,
        i_bt in prop::collection::vec(-3.0f64..3.0, 3),
        entries in prop::collection::vec(-2.0f64..2.0, 9),
    ) {
        let s = spd(3, &entries);
        let v = two_stage_variance(i_tt, &i_bt, &s).unwrap();
        prop_assert!(v >= 1.0 / i_tt);
        prop_assert_eq!(two_stage_variance(i_tt, &[0.0; 3], &s).unwrap(), 1.0 / i_tt);
    }
}

#[test]
fn jackknife_of_a_mean_matches_closed_form() {
    let (_, data) = sim(Family::Clayton, 0.5, 30, 3);
    let x: Vec<f64> = data.clusters().iter().map(|c| c.subjects[0].time.ln()).collect();
    let k = x.len() as f64;
    let mean = x.iter().sum::<f64>() / k;
    let closed = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k * (k - 1.0))).sqrt();
    let jk = grouped_jackknife_se(&data, data.n_clusters(), |d| {
        Ok(d.clusters().iter().map(|c| c.subjects[0].time.ln()).sum::<f64>() / d.n_clusters() as f64)
    })
    .unwrap();
    assert!((jk.standard_errors[0] - closed).abs() <= 1e-10 * closed);
    assert_eq!(jk.used, 30);
    let loo = jackknife_groups(data.n_clusters(), data.n_clusters()).unwrap();
    assert!(loo.iter().enumerate().all(|(i, g)| g == &vec![i]));
}

#[test]
fn two_stage_uses_the_independence_fit_unchanged() {
    let (_, data) = sim(Family::Clayton, 0.5, 40, 8);
    let detailed = fit_two_stage_parametric_detailed(Family::Clayton, &data).unwrap();
    assert_eq!(detailed.stage_one, fit_weibull_independence(&data).unwrap());
    let r = &detailed.report;
    assert_eq!(r.se_method, SeMethod::Sandwich);
    assert!(r.standard_errors.values().all(|&s| s >= 0.0));
    // the stage-two score vanishes at the optimum
    let score = profile_score_theta(Family::Clayton, &MarginModel::Weibull(detailed.stage_one.margin.clone()), &data, r.theta())
        .unwrap();
    assert!(score.abs() <= 1e-6, "score {score}");
    // the sandwich term adds variance
    let s = detailed.stage_one.sandwich().unwrap();
    let v = two_stage_variance(detailed.blocks.i_tt, &detailed.blocks.i_bt, &s).unwrap();
    assert!(v >= 1.0 / detailed.blocks.i_tt);
}

#[test]
fn theta_argmax_is_invariant_to_parametrisation() {
    for (family, theta0) in [(Family::Clayton, 0.8), (Family::GumbelHougaard, 0.6), (Family::InverseGaussian, 0.8)] {
        let (cfg, data) = sim(family, theta0, 40, 12);
        let margin = MarginModel::Weibull(cfg.margin.clone());
        let fit = maximize_theta(family, &margin, &data).unwrap();
        let (lo, hi) = (fit.theta * 0.5, (fit.theta * 1.5).min(if family == Family::GumbelHougaard { 0.999 } else { 50.0 }));
        let (direct, _, _) = brent_minimize(|t| -loglik_at_theta(family, t, &margin, &data).unwrap(), lo, hi, 1e-12);
        assert!((direct - fit.theta).abs() <= 1e-6 * fit.theta, "{family}: {direct} vs {}", fit.theta);
    }
}

#[test]
fn subject_order_does_not_change_estimates() {
    let (_, data) = sim(Family::GumbelHougaard, 0.5, 40, 21);
    let reversed: Vec<Cluster> = data
        .clusters()
        .iter()
        .map(|c| Cluster::new(c.id.clone(), c.subjects.iter().rev().cloned().collect()))
        .collect();
    let reversed = Dataset::new(reversed, data.covariate_names().to_vec()).unwrap();
    let a = fit_two_stage_parametric(Family::GumbelHougaard, &data).unwrap();
    let b = fit_two_stage_parametric(Family::GumbelHougaard, &reversed).unwrap();
    assert!((a.theta() - b.theta()).abs() <= 1e-8);
}

#[test]
fn one_stage_from_truth_is_stationary_and_concave() {
    let (cfg, data) = sim(Family::Clayton, 0.5, 60, 4);
    let init = OneStageInit { margin: cfg.margin.clone(), theta: 0.5 };
    let r = fit_one_stage(Family::Clayton, &data, Some(init)).unwrap();
    assert!(r.converged);
    assert!(r.score_norm <= 1e-6, "score {}", r.score_norm);
    assert!(r.hessian_negative_definite);
    assert!(r.warnings.is_empty(), "{:?}", r.warnings);
    let default_start = fit_one_stage(Family::Clayton, &data, None).unwrap();
    assert!((default_start.theta() - r.theta()).abs() < 1e-5);
    for key in ["lambda", "rho", "beta[z]", "theta"] {
        assert!(r.standard_errors[key] > 0.0, "{key}");
    }
}

#[test]
fn independent_data_lands_on_the_boundary_with_a_warning() {
    let cfg = SimulationConfig { theta0: 1e-6, n_clusters: 40, seed: 2, ..Default::default() };
    let mut flagged = 0;
    for r in 0..6 {
        let data = generate_dataset(&cfg, r).unwrap();
        let fit = fit_two_stage_parametric(Family::Clayton, &data).unwrap();
        assert!(fit.theta() < 0.05, "theta {}", fit.theta());
        if fit.theta() < 1.001e-4 {
            assert!(fit.warnings.iter().any(|w| w.contains("boundary")));
            flagged += 1;
        }
    }
    assert!(flagged > 0);
}

#[test]
fn singleton_clusters_are_rejected() {
    let (_, data) = sim(Family::Clayton, 0.5, 10, 1);
    let single = data.as_singletons();
    assert!(matches!(fit_two_stage_parametric(Family::Clayton, &single), Err(Error::Identifiability(_))));
    assert!(matches!(fit_one_stage(Family::Clayton, &single, None), Err(Error::Identifiability(_))));
    assert!(matches!(fit_two_stage_semiparametric(Family::Clayton, &single, None), Err(Error::Identifiability(_))));
}

#[test]
fn semiparametric_reports_jackknife_errors() {
    let (_, data) = sim(Family::Clayton, 1.0, 30, 6);
    let r = fit_two_stage_semiparametric(Family::Clayton, &data, Some(10)).unwrap();
    assert_eq!(r.se_method, SeMethod::Jackknife);
    assert!(r.theta() > 0.3 && r.theta() < 3.0);
    assert!(r.standard_errors["theta"] > 0.0);
    assert!(r.standard_errors["beta[z]"] > 0.0);
    assert!(!r.estimates.contains_key("lambda"));
}
