//! Acceptance suite: one PASS/FAIL line per criterion on stderr.
//!
//! Lines are written straight to the stderr handle so they survive the test
//! harness's output capture.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use common::*;
use emucal::calibration::demo::{linear_demo_data, linear_prior, TRUTH};
use emucal::calibration::{
    mcmc_sample, run_workflow, BuiltinModel, BuiltinSimulator, CodeSettings, Marginal, McmcSettings, PriorSpec,
    Simulator, WorkflowSettings,
};
use emucal::design::{maximin_lhs, ParameterSpace};
use emucal::diagnostics::{coverage_report, loocv_error, loocv_predictions, q2_loocv, LoocvMode};
use emucal::emulator::{fit_mle, FitOptions, FittedEmulator, TrainingSet, TrendSpec};
use emucal::kernel::{KernelKind, KernelSpec};
use rand::Rng;

fn verdict(n: usize, what: &str, ok: bool, detail: String) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{tag} criterion {n}: {what} ({detail})");
    assert!(ok, "criterion {n}: {what} ({detail})");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Length-scales shrink with the expected site spacing `m^(-1/d)` so that the
/// smooth kernels stay numerically positive definite without a nugget.
fn design_length_scales(rng: &mut rand_chacha::ChaCha8Rng, kind: KernelKind, m: usize, d: usize) -> Vec<f64> {
    let spacing = (m as f64).powf(-1.0 / d as f64);
    let factor = match kind {
        KernelKind::Gaussian => 0.3,
        KernelKind::Matern52 => 0.6,
        _ => 1.0,
    };
    (0..d).map(|_| factor * spacing * (0.5 + rng.random::<f64>())).collect()
}

fn random_kernel(kind: KernelKind, omega: Vec<f64>, rng: &mut rand_chacha::ChaCha8Rng) -> KernelSpec {
    if kind == KernelKind::PowerExponential {
        let p = (0..omega.len()).map(|_| 1.0 + rng.random::<f64>()).collect();
        KernelSpec::with_roughness(kind, omega, p).unwrap()
    } else {
        KernelSpec::new(kind, omega).unwrap()
    }
}

fn response(rng: &mut rand_chacha::ChaCha8Rng, x: &[Vec<f64>]) -> Vec<f64> {
    x.iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(k, v)| ((3.0 + k as f64) * v).sin())
                .sum::<f64>()
                + rng.random::<f64>()
        })
        .collect()
}

#[test]
fn interpolation_at_training_sites() {
    let start = Instant::now();
    let mut rng = rng(1001);
    let mut worst_mean = 0.0f64;
    let mut worst_mse = 0.0f64;
    let mut failures = Vec::new();
    for case in 0..100 {
        let d = 1 + case % 5;
        let m = rng.random_range(5..=30);
        let kind = KernelKind::ALL[case % 6];
        let x = random_points(&mut rng, m, d);
        let y = response(&mut rng, &x);
        let omega = design_length_scales(&mut rng, kind, m, d);
        let spec = random_kernel(kind, omega, &mut rng);
        let trend = if m > 2 * (d + 1) && case % 2 == 0 {
            TrendSpec::Linear
        } else {
            TrendSpec::Constant
        };
        let em = match FittedEmulator::with_hyperparameters(
            TrainingSet::new(x.clone(), y.clone()).unwrap(),
            trend,
            spec,
            0.0,
        ) {
            Ok(em) => em,
            Err(e) => {
                failures.push(format!("case {case}: {e}"));
                continue;
            }
        };
        let s2 = em.process_variance();
        for (p, yi) in x.iter().zip(&y) {
            let pred = em.predict(p).unwrap();
            let dm = (pred.mean - yi).abs() / (1.0 + yi.abs());
            let dv = pred.mse / s2;
            worst_mean = worst_mean.max(dm);
            worst_mse = worst_mse.max(dv);
            if dm > 1e-8 || dv > 1e-8 {
                failures.push(format!(
                    "case {case} ({kind:?}, d={d}, m={m}): mean {dm:.2e}, mse {dv:.2e}"
                ));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "interpolation on 100 random instances",
        failures.is_empty() && secs < 10.0,
        format!(
            "worst |dy|/(1+|y|) {worst_mean:.1e}, worst mse/s2 {worst_mse:.1e}, {secs:.2} s, failures {failures:?}"
        ),
    );
}

#[test]
fn predictor_matches_explicit_inverse_oracle() {
    let mut rng = rng(2002);
    let mut worst = [0.0f64; 3];
    for case in 0..50 {
        let d = 1 + case % 3;
        let m = rng.random_range(4..=10);
        let kind = KernelKind::ALL[case % 6];
        let x = maximin_lhs(m, &ParameterSpace::unit(d), 5, case as u64)
            .unwrap()
            .unit_points()
            .to_vec();
        let y = response(&mut rng, &x);
        let omega = design_length_scales(&mut rng, kind, m, d);
        let spec = random_kernel(kind, omega, &mut rng);
        let trend = [
            TrendSpec::Constant,
            TrendSpec::KnownConstant { mu: 0.3 },
            TrendSpec::Linear,
        ][case % 3]
            .clone();
        let trend = if matches!(trend, TrendSpec::Linear) && m <= d + 2 {
            TrendSpec::Constant
        } else {
            trend
        };
        let em = FittedEmulator::with_hyperparameters(TrainingSet::new(x, y).unwrap(), trend, spec, 0.0).unwrap();
        let oracle = Oracle::new(&em);
        for p in random_points(&mut rng, 5, d) {
            let pred = em.predict(&p).unwrap();
            let expanded = oracle.mse(&p);
            let bordered = oracle.cov_bordered(&p, &p);
            // relative error, floored where the MSE itself is cancellation noise
            let floor = 1e-6 * oracle.sigma2;
            worst[0] = worst[0].max(rel(pred.mean, oracle.mean(&p)));
            worst[1] = worst[1].max((pred.mse - expanded).abs() / expanded.abs().max(floor));
            worst[2] = worst[2].max((bordered - expanded).abs() / expanded.abs().max(floor));
        }
    }
    verdict(
        2,
        "mean and MSE match the explicit-inverse oracle; bordered and expanded MSE agree",
        worst.iter().all(|w| *w <= 1e-9),
        format!(
            "worst mean {:.1e}, mse {:.1e}, bordered vs expanded {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    );
}

#[test]
fn mle_recovers_generating_hyperparameters() {
    let start = Instant::now();
    let truth = kernel(KernelKind::Gaussian, &[0.3]);
    let (mut omegas, mut sigmas) = (Vec::new(), Vec::new());
    for rep in 0..10 {
        let mut rng = rng(3000 + rep);
        let x = random_points(&mut rng, 200, 1);
        let y = gp_draw(&mut rng, &x, &truth, 2.0);
        let opts = FitOptions {
            seed: rep,
            n_restarts: 4,
            nugget: 1e-8,
            ..FitOptions::default()
        };
        let em = fit_mle(
            &TrainingSet::new(x, y).unwrap(),
            &TrendSpec::Constant,
            KernelKind::Gaussian,
            &opts,
        )
        .unwrap();
        omegas.push(em.physical_length_scales()[0]);
        sigmas.push(em.process_variance());
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[4] + v[5])
    };
    let (w, s2) = (median(&mut omegas), median(&mut sigmas));
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        "median MLE length-scale and variance over 10 replicates",
        (0.21..=0.39).contains(&w) && (1.4..=2.8).contains(&s2) && secs < 60.0,
        format!("omega {w:.4}, sigma2 {s2:.4}, {secs:.2} s"),
    );
}

fn refit_loop(em: &FittedEmulator) -> Vec<f64> {
    let t = em.training();
    (0..t.len())
        .map(|i| {
            let rest: Vec<usize> = (0..t.len()).filter(|j| *j != i).collect();
            let sub = FittedEmulator::with_hyperparameters(
                t.subset(&rest).unwrap(),
                em.trend().clone(),
                em.kernel().clone(),
                em.hyperparameters().nugget,
            )
            .unwrap();
            sub.predict(&t.inputs()[i]).unwrap().mean
        })
        .collect()
}

#[test]
fn fast_loocv_identities() {
    let mut rng = rng(4004);
    let (mut worst_refit, mut worst_q2) = (0.0f64, 0.0f64);
    for case in 0..20 {
        let d = 1 + case % 3;
        let m = rng.random_range(5..=20);
        let kind = KernelKind::ALL[case % 6];
        let x = maximin_lhs(m, &ParameterSpace::unit(d), 5, case as u64)
            .unwrap()
            .unit_points()
            .to_vec();
        let y = response(&mut rng, &x);
        let omega = design_length_scales(&mut rng, kind, m, d);
        let spec = random_kernel(kind, omega, &mut rng);
        let trend = [
            TrendSpec::Constant,
            TrendSpec::KnownConstant { mu: 0.2 },
            TrendSpec::Linear,
        ][case % 3]
            .clone();
        let em = FittedEmulator::with_hyperparameters(TrainingSet::new(x, y).unwrap(), trend, spec, 0.0).unwrap();
        let fast = loocv_predictions(&em, &LoocvMode::Fixed).unwrap();
        for (h, p) in fast.iter().zip(refit_loop(&em)) {
            worst_refit = worst_refit.max((h.mean - p).abs() / (1.0 + p.abs()));
        }
        let e = loocv_error(&em, &LoocvMode::Fixed).unwrap();
        let q = q2_loocv(&em, &LoocvMode::Fixed).unwrap();
        let y = em.training().outputs();
        let mean = y.iter().sum::<f64>() / m as f64;
        let ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        worst_q2 = worst_q2.max(((1.0 - q) - m as f64 * e / ss).abs());
    }
    verdict(
        4,
        "fast LOOCV equals literal refits; Q2 and LOOCV error are consistent",
        worst_refit <= 1e-10 && worst_q2 <= 1e-12,
        format!("worst refit gap {worst_refit:.1e}, worst Q2 identity gap {worst_q2:.1e}"),
    );
}

#[test]
fn interval_coverage_of_correctly_specified_gp() {
    // 20 independent realizations with 50 held-out points each
    let mut hits = 0.0;
    for rep in 0..20u64 {
        let mut rng = rng(5000 + rep);
        let all = random_points(&mut rng, 90, 1);
        let y = gp_draw(&mut rng, &all, &kernel(KernelKind::Matern52, &[0.2]), 2.0);
        let t = TrainingSet::new(all[..40].to_vec(), y[..40].to_vec()).unwrap();
        let opts = FitOptions {
            nugget: 1e-8,
            seed: rep,
            ..FitOptions::default()
        };
        let em = fit_mle(&t, &TrendSpec::Constant, KernelKind::Matern52, &opts).unwrap();
        hits += 50.0 * coverage_report(&em, &all[40..], &y[40..], 0.95).unwrap();
    }
    let coverage = hits / 1000.0;
    verdict(
        5,
        "95% interval coverage on 1000 held-out points",
        (0.90..=0.99).contains(&coverage),
        format!("coverage {coverage:.3}"),
    );
}

#[test]
fn more_runs_shrink_errors_on_demo_function() {
    let grid: Vec<Vec<f64>> = equispaced(201, 0.0, 10.0).into_iter().map(|x| vec![x]).collect();
    let errors = |m: usize| {
        let t = training_1d(&equispaced(m, 0.0, 10.0), demo_function);
        let em = fit_mle(&t, &TrendSpec::Constant, KernelKind::Gaussian, &FitOptions::default()).unwrap();
        let mse = em.predict_batch(&grid, false).unwrap().mse.iter().sum::<f64>() / grid.len() as f64;
        (mse, loocv_error(&em, &LoocvMode::Fixed).unwrap())
    };
    let (mse5, e5) = errors(5);
    let (mse10, e10) = errors(10);
    verdict(
        6,
        "grid MSE and LOOCV error decrease from 5 to 10 runs",
        mse10 < mse5 && e10 < e5,
        format!("grid MSE {mse5:.3e} -> {mse10:.3e}, LOOCV {e5:.3e} -> {e10:.3e}"),
    );
}

#[test]
fn mcmc_reproduces_gaussian_target() {
    let mean = [1.0, -1.0];
    let cov = [[1.0, 0.5], [0.5, 2.0]];
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let prec = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
    let wide = Marginal::Normal { mean: 0.0, std: 1e3 };
    let prior = PriorSpec::new(vec!["a".into(), "b".into()], vec![wide.clone(), wide], None).unwrap();
    let settings = McmcSettings {
        n_samples: 50_000,
        seed: 7,
        ..Default::default()
    };
    let chain = mcmc_sample(
        |t| {
            let z = [t[0] - mean[0], t[1] - mean[1]];
            let q = z[0] * (prec[0][0] * z[0] + prec[0][1] * z[1]) + z[1] * (prec[1][0] * z[0] + prec[1][1] * z[1]);
            Ok(-0.5 * q)
        },
        &prior,
        &settings,
    )
    .unwrap();
    let m = chain.mean();
    let c = chain.covariance();
    let mean_gap = (0..2).map(|i| (m[i] - mean[i]).abs()).fold(0.0, f64::max);
    let cov_gap = (0..4)
        .map(|k| (c[(k / 2, k % 2)] - cov[k / 2][k % 2]).abs())
        .fold(0.0, f64::max);
    let acc = chain.acceptance_rate();
    verdict(
        7,
        "adaptive Metropolis on an analytic 2-D Gaussian",
        mean_gap <= 0.1 && cov_gap <= 0.15 && (0.15..=0.5).contains(&acc),
        format!("max mean gap {mean_gap:.3}, max covariance gap {cov_gap:.3}, acceptance {acc:.3}"),
    );
}

fn linear_sim() -> Arc<dyn Simulator> {
    Arc::new(BuiltinSimulator::with_default_names(BuiltinModel::Linear))
}

fn settings(seed: u64, use_discrepancy: bool) -> WorkflowSettings {
    WorkflowSettings {
        use_discrepancy,
        mcmc: McmcSettings {
            n_samples: 5000,
            seed,
            ..Default::default()
        },
        code: CodeSettings {
            seed,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn linear_demo_recovers_truth_and_contracts() {
    let start = Instant::now();
    let prior = linear_prior();
    let mut outside = Vec::new();
    let mut no_contraction = Vec::new();
    for seed in 0..10u64 {
        let run = |n_iuq: usize| {
            let data = linear_demo_data(n_iuq, 10, 0.05, 0.0, 100 + seed).unwrap();
            run_workflow(linear_sim(), &data, &prior, &settings(seed, true))
                .unwrap()
                .chain
                .summary()
        };
        let small = run(10);
        let large = run(20);
        for (c, truth) in small.components.iter().zip(TRUTH) {
            if (c.mean - truth).abs() > 3.0 * c.std {
                outside.push(format!("seed {seed} {}: {:.4} +/- {:.4}", c.name, c.mean, c.std));
            }
        }
        if !(0..2).all(|k| large.components[k].std < small.components[k].std) {
            no_contraction.push(seed);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        8,
        "linear demo: truth within 3 posterior sd, doubling IUQ rows shrinks both sd",
        outside.is_empty() && no_contraction.len() <= 1 && secs < 60.0,
        format!("outside {outside:?}, seeds without contraction {no_contraction:?}, {secs:.1} s for 20 runs"),
    );
}

#[test]
fn discrepancy_reduces_calibration_bias() {
    let prior = linear_prior();
    let mut with = [0.0; 2];
    let mut without = [0.0; 2];
    let mut calls = 0;
    for seed in 0..5u64 {
        let data = linear_demo_data(10, 10, 0.05, 0.5, 200 + seed).unwrap();
        for (use_discrepancy, acc) in [(true, &mut with), (false, &mut without)] {
            let r = run_workflow(linear_sim(), &data, &prior, &settings(seed, use_discrepancy)).unwrap();
            calls += r.discrepancy_calls_in_validation;
            let m = r.chain.mean();
            for k in 0..2 {
                acc[k] += (m[k] - TRUTH[k]).abs() / 5.0;
            }
        }
    }
    verdict(
        9,
        "with a 0.5 sin(x) bias the discrepancy model beats the ablation; validation never calls it",
        (0..2).all(|k| with[k] < without[k]) && calls == 0,
        format!("mean |error| with {with:.4?}, without {without:.4?}, validation discrepancy calls {calls}"),
    );
}

#[test]
fn calibrate_runs_are_byte_identical() {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo/linear.toml");
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_emucal"))
            .args([
                "calibrate",
                "--config",
                demo.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        std::fs::read(out.join("chain.csv")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    verdict(
        10,
        "two seeded calibrate runs give byte-identical chain CSVs",
        a == b,
        format!("{} bytes", a.len()),
    );
}
