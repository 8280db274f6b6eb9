//! End-to-end acceptance run: every criterion prints one PASS/FAIL line,
//! writes its report, and is then rerun to check byte-identical output.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nlerg::counterexamples::{verify_continuum, verify_no_invariant_recursion, verify_oscillation};
use nlerg::ergodicity::{
    certify_hm_contraction, check_contraction_inequality, check_rate, default_beta_grid, HmOptions, RateOptions,
    HM_VALIDATION_TOL,
};
use nlerg::kernels::{
    birth_death_with_reset, certify, markov_example, markov_kernel, mixture_example, MeasureGrid, Regime,
    DEFAULT_TIE_TOLERANCE,
};
use nlerg::mckean_vlasov::{
    estimate_local_alpha, fit_decay, girsanov_bound_check, lyapunov_diagnostic, make_weight_function, simulate_from,
    Confinement, GirsanovOptions, InitialLaw, Interaction, LocalAlphaOptions, SMVESpec, SimulationConfig,
};
use nlerg::measures::{random_measure_pairs, Binning, DiscreteMeasure};
use nlerg::report::write_json;
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    passed: bool,
    detail: String,
    report: Value,
}

type Criterion = fn() -> Outcome;

fn grid_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn oscillation() -> Outcome {
    let mut reports = Vec::new();
    let mut passed = true;
    for gamma in [0.1, 0.4, 0.8] {
        for a in grid_points(gamma / 2.0, 1.0 - gamma / 2.0, 5) {
            let r = verify_oscillation(gamma, a, 100).unwrap();
            passed &= r.passed();
            reports.push(r);
        }
    }
    Outcome {
        passed,
        detail: format!("{} (gamma, a) cases, 100 steps each", reports.len()),
        report: json!(reports),
    }
}

fn continuum() -> Outcome {
    let a = [0.125, 0.3, 0.5, 0.7, 0.875];
    let r = verify_continuum(0.2, 0.8, &a, 100).unwrap();
    let worst_residual = r
        .claims
        .iter()
        .filter(|c| c.name.starts_with("stationary"))
        .map(|c| c.witness)
        .fold(0.0, f64::max);
    let stationary = r.claims.iter().filter(|c| c.name.starts_with("stationary")).count();
    let pairs = r.claims.iter().filter(|c| c.name.starts_with("no_merging")).count();
    Outcome {
        passed: r.passed() && worst_residual < 1e-12 && stationary == 5 && pairs == 10,
        detail: format!("max residual {worst_residual:.1e}, {pairs} non-merging pairs"),
        report: json!(r),
    }
}

fn no_invariant() -> Outcome {
    let mut reports = Vec::new();
    let mut passed = true;
    let mut worst = 0.0f64;
    for alpha in [0.05, 0.15, 0.25, 0.35, 0.45] {
        for lambda in [0.5, 0.6, 0.7, 0.8, 0.9] {
            let r = verify_no_invariant_recursion(alpha, lambda, 50).unwrap();
            passed &= r.passed();
            for c in r.claims.iter().filter(|c| c.name.starts_with("threshold_") && c.name != "threshold_not_one") {
                worst = worst.max(c.witness.abs());
            }
            reports.push(r);
        }
    }
    Outcome {
        passed: passed && worst < 1e-12,
        detail: format!("25 (alpha, lambda) pairs, n <= 50, max |mu(n)| {worst:.1e}"),
        report: json!(reports),
    }
}

fn contraction() -> Outcome {
    let mut passed = true;
    let mut out = Vec::new();
    for (n, seed) in [(2usize, 11u64), (5, 12)] {
        let k = mixture_example(n).unwrap();
        let cert = certify(&k, &MeasureGrid::new(n, if n == 2 { 50 } else { 8 }).unwrap(), DEFAULT_TIE_TOLERANCE).unwrap();
        let pairs = random_measure_pairs(n, 10_000, seed);
        let rep = check_contraction_inequality(&k, cert.alpha_hat, cert.lambda_hat, &pairs).unwrap();
        passed &= cert.lambda_hat <= cert.alpha_hat && rep.passed() && rep.pairs_checked == 10_000;
        out.push(json!({
            "certificate": cert,
            "pairs_checked": rep.pairs_checked,
            "violations": rep.violations.len(),
            "max_excess": rep.max_excess,
        }));
    }
    Outcome {
        passed,
        detail: "2- and 5-state mixtures, 10^4 pairs each".to_string(),
        report: json!(out),
    }
}

fn rate() -> Outcome {
    let mut passed = true;
    let mut out = Vec::new();
    let mut cases = vec![
        (mixture_example(2).unwrap(), MeasureGrid::new(2, 50).unwrap()),
        (mixture_example(5).unwrap(), MeasureGrid::new(5, 8).unwrap()),
        (markov_example(), MeasureGrid::new(3, 20).unwrap()),
    ];
    for (k, grid) in cases.drain(..) {
        let cert = certify(&k, &grid, DEFAULT_TIE_TOLERANCE).unwrap();
        let n = k.space_size();
        let mu0 = DiscreteMeasure::dirac(n, n - 1).unwrap();
        let rep = check_rate(&k, &cert, &mu0, 200, RateOptions::default()).unwrap();
        let markov_ok = if k.is_measure_independent() {
            cert.lambda_hat == 0.0
                && rep.rows.iter().all(|r| (r.bound - 2.0 * (1.0 - cert.alpha_hat).powi(r.n as i32)).abs() < 1e-15)
        } else {
            true
        };
        passed &= cert.regime == Regime::Fast && !rep.falsified() && rep.rows.len() == 201 && markov_ok;
        out.push(rep);
    }
    Outcome {
        passed,
        detail: format!("3 fast-regime kernels, n <= 200, min margin {:.2e}",
            out.iter().map(|r| r.min_margin()).fold(f64::INFINITY, f64::min)),
        report: json!(out),
    }
}

fn hm() -> Outcome {
    let q = birth_death_with_reset();
    let v: Vec<f64> = (0..5).map(|i| 2f64.powi(i)).collect();
    let qv = q.apply_function(&v);
    let drift_ok = qv.iter().zip(&v).all(|(a, b)| *a <= 0.8 * b + 2.0 + 1e-12);
    let k = markov_kernel("birth-death", q.clone());
    let opts = HmOptions {
        gamma: 0.8,
        k: 2.0,
        alpha_local: 0.2,
        beta_grid: default_beta_grid(),
    };
    let cert = certify_hm_contraction(&k, &v, &opts, &random_measure_pairs(5, 1000, 21)).unwrap();
    let fresh = random_measure_pairs(5, 1000, 22);
    let violations = cert.violations(&q, &v, &fresh, HM_VALIDATION_TOL);
    Outcome {
        passed: drift_ok && cert.lambda_w < 1.0 && violations.is_empty(),
        detail: format!("beta {:.3}, lambda_w {:.4}, {} violations on 1000 fresh pairs", cert.beta, cert.lambda_w, violations.len()),
        report: json!({ "certificate": cert, "drift": qv, "fresh_violations": violations }),
    }
}

fn ou_anchor() -> Outcome {
    let spec = SMVESpec::from_parts(1, Confinement::Linear { rate: 1.0 }, Interaction::None, 0.0, 1.0, 1.0)
        .unwrap();
    let cfg = SimulationConfig {
        n_particles: 10_000,
        h: 0.01,
        t_end: 10.0,
        snapshot_every: 10.0,
        seed: 70,
    };
    let run = simulate_from(&spec, &InitialLaw::dirac(vec![0.0]), &cfg).unwrap();
    let xs = run.last().positions.raw();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let se = ((m4 - var * var) / n).sqrt();
    let var_ok = (var - 0.5).abs() <= 3.0 * se;

    let starts = vec![vec![-1.0], vec![0.0], vec![1.0]];
    let opts = LocalAlphaOptions {
        radius: 1.0,
        t: 1.0,
        n_sims: 100_000,
        h: 0.01,
        seed: 71,
    };
    let la = estimate_local_alpha(Arc::new(Confinement::Linear { rate: 1.0 }), &starts, &Binning::uniform_1d(-10.0, 10.0, 200), &opts)
        .unwrap();
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let s = ((1.0 - (-2.0f64).exp()) / 2.0).sqrt();
    let gap = 2.0 * (-1.0f64).exp();
    let exact = 1.0 - (2.0 * std_normal.cdf(gap / (2.0 * s)) - 1.0);
    let alpha_ok = (la.alpha_hat - exact).abs() <= 0.05;
    Outcome {
        passed: var_ok && alpha_ok,
        detail: format!(
            "variance {var:.4} (se {se:.4}), local alpha {:.4} vs exact {exact:.4}",
            la.alpha_hat
        ),
        report: json!({ "variance": var, "variance_std_error": se, "mean": mean, "local_alpha": la, "exact_local_alpha": exact }),
    }
}

fn girsanov() -> Outcome {
    let mu0 = InitialLaw::dirac(vec![0.0]);
    let nu0 = InitialLaw::Atomic {
        atoms: vec![0.0, 1.0],
        weights: vec![0.9, 0.1],
    };
    let mut passed = true;
    let mut out = Vec::new();
    let mut worst_ratio = 0.0f64;
    for (i, eps) in [0.0, 0.01, 0.05].into_iter().enumerate() {
        let spec = SMVESpec::vh_preset(1, 1.0, 1.0, 1.0, eps).unwrap();
        let opts = GirsanovOptions {
            n_particles: 10_000,
            h: 0.01,
            seed: 80 + i as u64,
            binning: Binning::uniform_1d(-10.0, 10.0, 200),
            allowance: None,
            calibration_runs: 20,
            calibration_quantile: 0.99,
        };
        let rep = girsanov_bound_check(&spec, &mu0, &nu0, 0.2, &[0.5, 1.0, 2.0], &opts).unwrap();
        passed &= !rep.falsified() && rep.rows.len() == 3;
        for r in &rep.rows {
            worst_ratio = worst_ratio.max(r.estimated_tv / (r.bound + r.allowance));
        }
        out.push(json!({
            "epsilon": eps,
            "lipschitz": rep.lipschitz,
            "allowance": rep.calibration.as_ref().map(|c| c.allowance),
            "rows": rep.rows,
        }));
    }
    Outcome {
        passed,
        detail: format!("3 epsilons x 3 times, max tv/(bound+allowance) {worst_ratio:.3}"),
        report: json!(out),
    }
}

fn merging() -> Outcome {
    let spec = SMVESpec::vh_preset(1, 1.0, 1.0, 1.0, 0.05).unwrap();
    let cfg = SimulationConfig {
        n_particles: 10_000,
        h: 0.01,
        t_end: 20.0,
        snapshot_every: 0.5,
        seed: 90,
    };
    let a = simulate_from(&spec, &InitialLaw::dirac(vec![0.0]), &cfg).unwrap();
    let b = simulate_from(&spec, &InitialLaw::Gaussian { mean: vec![2.0], std: 1.0 }, &cfg).unwrap();
    let binning = Binning::uniform_1d(-10.0, 10.0, 200);
    let fit = fit_decay(&a, &b, &binning, 0.02).unwrap();
    let final_tv = *fit.tv.last().unwrap();
    let v = make_weight_function(spec.r, spec.m).unwrap();
    let ly_a = lyapunov_diagnostic(&a, &v, 1.0, spec.r).unwrap();
    let ly_b = lyapunov_diagnostic(&b, &v, 1.0, spec.r).unwrap();
    let passed = final_tv < 0.05
        && fit.theta > 0.0
        && fit.theta_lower > 0.0
        && ly_a.gamma_hat < 1.0
        && ly_b.gamma_hat < 1.0
        && spec.epsilon <= spec.r / (2.0 * spec.d_bound);
    Outcome {
        passed,
        detail: format!(
            "TV(20) {final_tv:.4}, theta {:.3} [{:.3}, {:.3}], gamma {:.3} / {:.3}",
            fit.theta, fit.theta_lower, fit.theta_upper, ly_a.gamma_hat, ly_b.gamma_hat
        ),
        report: json!({ "decay": fit, "lyapunov_from_dirac": ly_a, "lyapunov_from_gaussian": ly_b }),
    }
}

const CRITERIA: [(&str, Criterion, Duration); 9] = [
    ("oscillation period two", oscillation, Duration::from_secs(1)),
    ("continuum of invariant laws", continuum, Duration::from_secs(1)),
    ("no invariant law", no_invariant, Duration::from_secs(1)),
    ("contraction inequality", contraction, Duration::from_secs(10)),
    ("rate bounds", rate, Duration::from_secs(5)),
    ("weighted contraction certificate", hm, Duration::from_secs(5)),
    ("OU analytic anchor", ou_anchor, Duration::from_secs(120)),
    ("Girsanov bound", girsanov, Duration::from_secs(300)),
    ("ensembles merge", merging, Duration::from_secs(600)),
];

fn run_all(dir: &Path, verbose: bool) -> Vec<bool> {
    let mut results = Vec::new();
    for (i, (name, f, limit)) in CRITERIA.iter().enumerate() {
        let clock = Instant::now();
        let o = f();
        let took = clock.elapsed();
        write_json(&dir.join(format!("criterion_{}.json", i + 1)), &o.report).unwrap();
        let ok = o.passed && took <= *limit;
        if verbose {
            println!(
                "criterion {:>2} {:<34} {} ({:.2} s, limit {} s) {}",
                i + 1,
                name,
                if ok { "PASS" } else { "FAIL" },
                took.as_secs_f64(),
                limit.as_secs(),
                o.detail
            );
        }
        results.push(ok);
    }
    results
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let (first, second) = (tmp.path().join("first"), tmp.path().join("second"));
    std::fs::create_dir_all(&first).unwrap();
    std::fs::create_dir_all(&second).unwrap();
    let mut results = run_all(&first, true);
    run_all(&second, false);
    let identical = (1..=CRITERIA.len()).all(|i| {
        let f = format!("criterion_{i}.json");
        std::fs::read(first.join(&f)).unwrap() == std::fs::read(second.join(&f)).unwrap()
    });
    println!(
        "criterion 10 {:<34} {} (9 report files compared)",
        "byte-identical reruns",
        if identical { "PASS" } else { "FAIL" }
    );
    results.push(identical);
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all {} criteria passed", results.len());
}
