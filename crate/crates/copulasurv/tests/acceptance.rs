//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach the console; the process exits
//! non-zero if any criterion fails. The two replication criteria dominate the
//! runtime (several minutes on one core).

use std::process::Command;
use std::time::Instant;

use copulasurv::replicate::{pool, run_cells, ReplicateRequest};
use copulasurv::report::CellReport;
use copulasurv::scenarios::Cell;
use copulasurv_core::estimators::{one_stage_variance, two_stage_variance, InformationBlocks};
use copulasurv_core::likelihood::{cluster_loglik, table_for, total_loglik};
use copulasurv_core::linalg::Matrix;
use copulasurv_core::simulation::{
    censoring_rate, derive_seed, generate_dataset, sample_mixing_variable, stream, Censoring, CovariateRule,
    SimulationConfig,
};
use copulasurv_core::{
    Cluster, CoefficientTable, Dataset, Family, Generator, MarginModel, Method, PvfParams, Subject, WeibullMargin,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 1. Clayton derivatives against the product form

fn criterion_1() -> Outcome {
    let table = CoefficientTable::new(60, 0.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for theta in [0.2, 1.0, 1.5] {
        let pvf = PvfParams { alpha: 0.0, delta: 1.0 / theta, gamma: 1.0 / theta };
        for k in 1..=60usize {
            for s in [0.0, 0.5, 2.0] {
                let d = pvf.derivative(s, k, &table).map_err(|e| e.to_string())?;
                let product: f64 = (1..k).map(|j| (1.0 + j as f64 * theta).ln()).sum();
                let want = -(1.0 / theta + k as f64) * (1.0 + theta * s).ln() + product;
                worst = worst.max((d.log_abs - want).abs() / want.abs().max(1.0));
                if d.sign != if k % 2 == 0 { 1 } else { -1 } {
                    return Err(format!("wrong sign at theta={theta} k={k} s={s}"));
                }
            }
        }
    }
    check(worst <= 1e-10, format!("max relative error {worst:.2e} (limit 1e-10), signs alternate"))
}

// ---------------------------------------------------------------------------
// 2. Finite differences for Gumbel-Hougaard and inverse Gaussian

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for (family, thetas) in [(Family::GumbelHougaard, [0.2, 0.5, 0.9]), (Family::InverseGaussian, [0.2, 1.0, 3.0])] {
        for theta in thetas {
            let gen = Generator::new(family, theta).map_err(|e| e.to_string())?;
            let table = CoefficientTable::new(4, gen.table_alpha()).map_err(|e| e.to_string())?;
            for k in 1..=4 {
                for s in [0.5, 2.0] {
                    let f = |x: f64| gen.phi_deriv(x, k - 1, &table).map(|d| d.value());
                    let h = 1e-4 * s;
                    let fd = (-f(s + 2.0 * h).unwrap() + 8.0 * f(s + h).unwrap() - 8.0 * f(s - h).unwrap()
                        + f(s - 2.0 * h).unwrap())
                        / (12.0 * h);
                    let exact = gen.phi_deriv(s, k, &table).map_err(|e| e.to_string())?.value();
                    worst = worst.max(((fd - exact) / exact).abs());
                }
            }
        }
    }
    check(worst <= 1e-5, format!("max relative error {worst:.2e} (limit 1e-5)"))
}

// ---------------------------------------------------------------------------
// 3. Likelihood against the joint survival function

fn phi(family: Family, theta: f64, s: f64) -> f64 {
    match family {
        Family::Clayton => (1.0 + theta * s).powf(-1.0 / theta),
        Family::GumbelHougaard => (-s.powf(theta)).exp(),
        Family::InverseGaussian => ((1.0 - (1.0 + 2.0 * theta * s).sqrt()) / theta).exp(),
    }
}

fn phi_inv(family: Family, theta: f64, u: f64) -> f64 {
    match family {
        Family::Clayton => (u.powf(-theta) - 1.0) / theta,
        Family::GumbelHougaard => (-u.ln()).powf(1.0 / theta),
        Family::InverseGaussian => {
            let x = -u.ln();
            x + theta * x * x / 2.0
        }
    }
}

fn weibull_s(m: &WeibullMargin, t: f64, z: &[f64]) -> f64 {
    let lp: f64 = m.beta.iter().zip(z).map(|(b, x)| b * x).sum();
    (-m.lambda * lp.exp() * t.powf(m.rho)).exp()
}

fn weibull_log_f(m: &WeibullMargin, t: f64, z: &[f64]) -> f64 {
    let lp: f64 = m.beta.iter().zip(z).map(|(b, x)| b * x).sum();
    m.lambda.ln() + lp + m.rho.ln() + (m.rho - 1.0) * t.ln() - m.lambda * lp.exp() * t.powf(m.rho)
}

fn pair_oracle(family: Family, theta: f64, m: &WeibullMargin, t: [f64; 2], z: [&[f64]; 2], e: [bool; 2]) -> f64 {
    let joint = |a: f64, b: f64| {
        phi(family, theta, phi_inv(family, theta, weibull_s(m, a, z[0])) + phi_inv(family, theta, weibull_s(m, b, z[1])))
    };
    match e {
        [false, false] => joint(t[0], t[1]),
        [true, false] => {
            let h = 1e-5 * t[0];
            -(joint(t[0] + h, t[1]) - joint(t[0] - h, t[1])) / (2.0 * h)
        }
        [false, true] => {
            let h = 1e-5 * t[1];
            -(joint(t[0], t[1] + h) - joint(t[0], t[1] - h)) / (2.0 * h)
        }
        [true, true] => {
            let (h1, h2) = (1e-3 * t[0], 1e-3 * t[1]);
            (joint(t[0] + h1, t[1] + h2) - joint(t[0] + h1, t[1] - h2) - joint(t[0] - h1, t[1] + h2)
                + joint(t[0] - h1, t[1] - h2))
                / (4.0 * h1 * h2)
        }
    }
}

fn criterion_3() -> Outcome {
    let margins = [WeibullMargin::new(1.0, 1.0, vec![]).unwrap(), WeibullMargin::new(0.3, 1.5, vec![0.7]).unwrap()];
    let (mut worst_pair, mut worst_single) = (0.0f64, 0.0f64);
    for family in Family::ALL {
        let thetas: [f64; 3] = if family == Family::GumbelHougaard { [0.3, 0.6, 0.9] } else { [0.3, 1.0, 2.5] };
        for theta in thetas {
            let gen = Generator::new(family, theta).map_err(|e| e.to_string())?;
            let table = table_for(&gen, 2).map_err(|e| e.to_string())?;
            for m in &margins {
                let model = MarginModel::Weibull(m.clone());
                let z: [Vec<f64>; 2] = if m.beta.is_empty() { [vec![], vec![]] } else { [vec![1.0], vec![0.0]] };
                for e in [[false, false], [true, false], [false, true], [true, true]] {
                    let t = [0.3, 0.7];
                    let c = Cluster::new(
                        "c",
                        vec![Subject::new(t[0], e[0], z[0].clone()), Subject::new(t[1], e[1], z[1].clone())],
                    );
                    let ll = cluster_loglik(&gen, &model, &c, &table).map_err(|e| e.to_string())?;
                    let want = pair_oracle(family, theta, m, t, [&z[0], &z[1]], e);
                    worst_pair = worst_pair.max((ll.exp() - want).abs() / want);
                }
                for (t, event) in [(0.4, true), (2.5, true), (0.4, false), (2.5, false)] {
                    let c = Cluster::new("s", vec![Subject::new(t, event, z[0].clone())]);
                    let ll = cluster_loglik(&gen, &model, &c, &table).map_err(|e| e.to_string())?;
                    let want = if event { weibull_log_f(m, t, &z[0]) } else { weibull_s(m, t, &z[0]).ln() };
                    worst_single = worst_single.max((ll - want).abs() / want.abs().max(1.0));
                }
            }
        }
    }
    check(
        worst_pair <= 1e-4 && worst_single <= 1e-12,
        format!("pairs max relative error {worst_pair:.2e} (limit 1e-4); singletons {worst_single:.2e} (limit 1e-12)"),
    )
}

// ---------------------------------------------------------------------------
// 4. Sampler calibration

fn pairs(family: Family, theta: f64, k: usize, seed: u64) -> Result<Dataset, String> {
    let cfg = SimulationConfig {
        family,
        theta0: theta,
        n_clusters: k,
        size_min: 2,
        size_max: 2,
        margin: WeibullMargin { lambda: 1.0, rho: 1.0, beta: vec![] },
        covariate_rule: CovariateRule::None,
        censoring: None,
        seed,
        replicates: 1,
    };
    generate_dataset(&cfg, 0).map_err(|e| e.to_string())
}

fn kendall_tau(x: &[(f64, f64)]) -> f64 {
    let n = x.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let a = (x[i].0 - x[j].0) * (x[i].1 - x[j].1);
            s += (a > 0.0) as i64 - (a < 0.0) as i64;
        }
    }
    2.0 * s as f64 / (n * (n - 1)) as f64
}

/// Kolmogorov-Smirnov distance of a sample from the uniform law.
fn ks_uniform(mut u: Vec<f64>) -> f64 {
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter().enumerate().map(|(i, &x)| f64::max((i as f64 + 1.0) / n - x, x - i as f64 / n)).fold(0.0, f64::max)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let data = pairs(Family::Clayton, 2.0, 20_000, 17)?;
    let xy: Vec<(f64, f64)> = data.clusters().iter().map(|c| (c.subjects[0].time, c.subjects[1].time)).collect();
    let tau = kendall_tau(&xy);
    // unit exponential margins, so U = exp(-T) must be uniform; each coordinate
    // is an independent sample
    let critical = 1.628 / (xy.len() as f64).sqrt();
    let ks = [
        ks_uniform(xy.iter().map(|p| (-p.0).exp()).collect()),
        ks_uniform(xy.iter().map(|p| (-p.1).exp()).collect()),
    ];
    let mut laplace_ok = true;
    let mut worst_z = 0.0f64;
    for (family, theta) in [(Family::Clayton, 2.0), (Family::GumbelHougaard, 0.5), (Family::InverseGaussian, 1.0)] {
        let gen = Generator::new(family, theta).map_err(|e| e.to_string())?;
        let mut rng = stream(99, &[family as u64]);
        let n = 100_000;
        let w: Vec<f64> =
            (0..n).map(|_| sample_mixing_variable(family, theta, &mut rng)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let v: Vec<f64> = w.iter().map(|x| (-t * x).exp()).collect();
            let mean = v.iter().sum::<f64>() / n as f64;
            let se = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() / (n as f64).sqrt();
            let z = (mean - gen.phi(t).map_err(|e| e.to_string())?).abs() / se;
            worst_z = worst_z.max(z);
            laplace_ok &= z <= 3.0;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        (0.48..=0.52).contains(&tau) && ks.iter().all(|&d| d < critical) && laplace_ok && secs < 30.0,
        format!(
            "tau {tau:.4} in [0.48, 0.52]; KS {:.4}/{:.4} < {critical:.4}; Laplace max |z| {worst_z:.2} <= 3; {secs:.1} s",
            ks[0], ks[1]
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Censoring calibration

fn censoring_over(lambda_c: f64, min_subjects: usize) -> Result<f64, String> {
    let cfg = SimulationConfig { censoring: Some(Censoring { lambda: lambda_c, rho: 1.5 }), seed: 3, ..Default::default() };
    let (mut censored, mut total, mut r) = (0.0, 0usize, 0);
    while total < min_subjects {
        let d = generate_dataset(&cfg, r).map_err(|e| e.to_string())?;
        censored += censoring_rate(&d) * d.n_subjects() as f64;
        total += d.n_subjects();
        r += 1;
    }
    Ok(censored / total as f64)
}

fn criterion_5() -> Outcome {
    let low = censoring_over(0.0274, 100_000)?;
    let high = censoring_over(0.1464, 100_000)?;
    check(
        (low - 0.25).abs() <= 0.03 && (high - 0.50).abs() <= 0.03,
        format!("censoring {:.1}% (target 25 +- 3) and {:.1}% (target 50 +- 3)", 100.0 * low, 100.0 * high),
    )
}

// ---------------------------------------------------------------------------
// 6 and 7. Replication cells

fn run_cell(cell: Cell, methods: &[Method], groups: Option<usize>) -> Result<CellReport, String> {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let req = ReplicateRequest { cells: vec![cell], replicates: 100, seed: 2024, methods: methods.to_vec(), jackknife_groups: groups };
    let report = run_cells(&req, &pool(threads).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?.remove(0);
    match &report.error {
        Some(e) => Err(e.clone()),
        None => Ok(report),
    }
}

struct Target {
    method: Method,
    mean: f64,
    mean_tol: f64,
    se: Option<f64>,
    min_coverage: Option<f64>,
}

fn judge(report: &CellReport, targets: &[Target]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for t in targets {
        let Some(m) = report.methods.iter().find(|m| m.method == t.method) else {
            return Err(format!("{} missing", t.method));
        };
        let mean = m.mean_estimate.unwrap_or(f64::NAN);
        let mut part = format!("{} mean {mean:.3} (target {} +- {})", t.method, t.mean, t.mean_tol);
        ok &= (mean - t.mean).abs() <= t.mean_tol;
        if let Some(se) = t.se {
            let got = m.mean_se.unwrap_or(f64::NAN);
            ok &= (got - se).abs() <= 0.3 * se;
            part += &format!(", SE {got:.3} (target {se} +- 30%)");
        }
        if let Some(c) = t.min_coverage {
            let got = m.coverage.unwrap_or(0.0);
            ok &= got >= c;
            part += &format!(", coverage {:.0}% (>= {:.0}%)", 100.0 * got, 100.0 * c);
        }
        if m.failures > 0 {
            part += &format!(", {} failed fits", m.failures);
        }
        parts.push(part);
    }
    check(ok, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let cell = Cell::standard(Family::Clayton, 0.5, 200, 0).map_err(|e| e.to_string())?;
    let report = run_cell(cell, &Method::ALL, Some(50))?;
    judge(
        &report,
        &[
            Target { method: Method::OneStageParametric, mean: 0.498, mean_tol: 0.03, se: Some(0.042), min_coverage: Some(0.85) },
            Target { method: Method::TwoStageParametric, mean: 0.496, mean_tol: 0.03, se: Some(0.050), min_coverage: Some(0.85) },
            Target { method: Method::TwoStageSemiparametric, mean: 0.487, mean_tol: 0.04, se: Some(0.056), min_coverage: None },
        ],
    )
}

fn criterion_7() -> Outcome {
    let cell = Cell::standard(Family::GumbelHougaard, 0.8, 200, 25).map_err(|e| e.to_string())?;
    let report = run_cell(cell, &[Method::OneStageParametric, Method::TwoStageParametric], None)?;
    judge(
        &report,
        &[
            Target { method: Method::OneStageParametric, mean: 0.802, mean_tol: 0.03, se: None, min_coverage: None },
            Target { method: Method::TwoStageParametric, mean: 0.798, mean_tol: 0.03, se: None, min_coverage: None },
        ],
    )
}

// ---------------------------------------------------------------------------
// 8. Variance formulas

fn uniform(seed: u64, i: u64) -> f64 {
    (derive_seed(seed, &[i]) >> 11) as f64 / (1u64 << 53) as f64
}

/// `(I^{-1})_{tt}` as the inverse Schur complement, by plain Gaussian
/// elimination on the beta block.
fn inverse_theta_element(full: &Matrix) -> f64 {
    let n = full.rows();
    let p = n - 1;
    let mut a: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| full[(i, j)]).chain([full[(i, p)]]).collect()).collect();
    for c in 0..p {
        let piv = (c..p).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=p {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    let solved: Vec<f64> = (0..p).map(|i| a[i][p] / a[i][i]).collect();
    let schur = full[(p, p)] - (0..p).map(|i| full[(p, i)] * solved[i]).sum::<f64>();
    1.0 / schur
}

fn criterion_8() -> Outcome {
    let mut worst = 0.0f64;
    let mut reduces = true;
    for case in 0..100u64 {
        let n = 2 + (case % 5) as usize;
        let a = Matrix::from_fn(n, n, |i, j| 4.0 * uniform(case, (i * n + j) as u64) - 2.0);
        let full = Matrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| a[(i, k)] * a[(j, k)]).sum::<f64>() + if i == j { 0.5 } else { 0.0 }
        });
        let v = one_stage_variance(&InformationBlocks::from_full(&full)).map_err(|e| e.to_string())?;
        let want = inverse_theta_element(&full);
        worst = worst.max((v - want).abs() / want.abs().max(1.0));

        let i_tt = full[(n - 1, n - 1)];
        let sandwich = full.select(&(0..n - 1).collect::<Vec<_>>(), &(0..n - 1).collect::<Vec<_>>());
        reduces &= two_stage_variance(i_tt, &vec![0.0; n - 1], &sandwich).map_err(|e| e.to_string())? == 1.0 / i_tt;
    }
    check(
        worst <= 1e-10 && reduces,
        format!("one-stage variance vs inverse information max relative error {worst:.2e} (limit 1e-10); two-stage variance with zero cross term equals 1/I_tt: {reduces}"),
    )
}

// ---------------------------------------------------------------------------
// 9. Stress case

fn criterion_9() -> Outcome {
    let gen = Generator::new(Family::Clayton, 0.2).map_err(|e| e.to_string())?;
    let m = MarginModel::Weibull(WeibullMargin::new(0.0316, 1.5, vec![3.0]).map_err(|e| e.to_string())?);
    let subjects = (0..174).map(|j| Subject::new(1.0 + 0.05 * j as f64, true, vec![(j % 2) as f64])).collect();
    let data = Dataset::new(vec![Cluster::new("herd", subjects)], vec!["z".into()]).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let table = table_for(&gen, data.max_events()).map_err(|e| e.to_string())?;
    let ll = total_loglik(&gen, &m, &data, &table).map_err(|e| e.to_string())?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    check(ll.is_finite() && ms < 100.0, format!("loglik {ll:.4} finite, {ms:.1} ms (limit 100 ms)"))
}

// ---------------------------------------------------------------------------
// 10. Determinism across thread counts

fn criterion_10() -> Outcome {
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_copulasurv"))
            .env_remove("COPULASURV_THREADS")
            .args([
                "replicate", "--scenario", "clayton-1-k50-c25,gumbel-0.5-k50-c0", "--replicates", "4", "--seed", "7",
                "--jackknife-groups", "10", "--format", "json", "--threads", threads,
            ])
            .output()
            .map_err(|e| e.to_string())
    };
    let a = run("1")?;
    let b = run("8")?;
    if !a.status.success() || !b.status.success() {
        return Err(format!("exit codes {:?} / {:?}: {}", a.status.code(), b.status.code(), String::from_utf8_lossy(&a.stderr)));
    }
    check(
        a.stdout == b.stdout && !a.stdout.is_empty(),
        format!("{} JSON bytes with --threads 1, identical with --threads 8: {}", a.stdout.len(), a.stdout == b.stdout),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Clayton derivative oracle", criterion_1),
        ("finite-difference derivative checks", criterion_2),
        ("likelihood oracle", criterion_3),
        ("sampler calibration", criterion_4),
        ("censoring calibration", criterion_5),
        ("Clayton 0.5 K=200 replication", criterion_6),
        ("Gumbel 0.8 K=200 25% censoring replication", criterion_7),
        ("variance-formula algebra", criterion_8),
        ("174-subject stress case", criterion_9),
        ("determinism across thread counts", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} criterion {:>2} {name}: {detail} [{secs:.1} s]", i + 1);
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
