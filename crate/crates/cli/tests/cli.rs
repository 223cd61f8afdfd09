use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emucal::design::{sobol_sequence, ParameterSpace};
use emucal::emulator::{fit_cv, fit_mle, FitOptions, FittedEmulator, TrainingSet, TrendSpec};
use emucal::kernel::KernelKind;
use emucal_cli::config::{config_hash, load_config};

fn emucal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emucal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("demo")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn numbers(rows: &[Vec<String>], col: usize) -> Vec<f64> {
    rows.iter().map(|r| r[col].parse().unwrap()).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn lhs_design_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let space = dir.path().join("space.toml");
    std::fs::write(
        &space,
        "names = [\"a\", \"b\"]\nlower = [0.0, 10.0]\nupper = [1.0, 20.0]\n",
    )
    .unwrap();
    let out = dir.path().join("design.csv");
    let res = emucal(&[
        "design",
        "--method",
        "lhs",
        "--n",
        "10",
        "--space",
        p(&space),
        "--seed",
        "3",
        "--out",
        p(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let (header, rows) = read_rows(&out);
    assert_eq!(header, vec!["a", "b"]);
    assert_eq!(rows.len(), 10);
    assert!(numbers(&rows, 1).iter().all(|v| (10.0..=20.0).contains(v)));
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("design.csv.json")).unwrap()).unwrap();
    assert_eq!(sidecar["generator"]["method"], "lhs");
    assert_eq!(sidecar["generator"]["seed"], 3);
}

#[test]
fn sobol_design_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let space = dir.path().join("space.json");
    std::fs::write(&space, r#"{"names":["x"],"lower":[0.0],"upper":[1.0]}"#).unwrap();
    let out = dir.path().join("sobol.csv");
    let res = emucal(&[
        "design",
        "--method",
        "sobol",
        "--n",
        "4",
        "--space",
        p(&space),
        "--out",
        p(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let (_, rows) = read_rows(&out);
    let expected = sobol_sequence(4, &ParameterSpace::unit(1), 0).unwrap();
    let got = numbers(&rows, 0);
    let want: Vec<f64> = expected.physical_points().iter().map(|r| r[0]).collect();
    assert_eq!(got, want);
    assert_eq!(got[0], 0.5);
}

#[test]
fn missing_space_file_is_reported() {
    let res = emucal(&[
        "design",
        "--method",
        "lhs",
        "--n",
        "4",
        "--space",
        "/nonexistent/space.toml",
        "--out",
        "/tmp/x.csv",
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("/nonexistent/space.toml"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(emucal(&["design", "--n", "4"]).status.code(), Some(1));
    assert_eq!(emucal(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(emucal(&["--help"]).status.code(), Some(0));
}

fn training_csv(dir: &Path) -> PathBuf {
    let path = dir.join("train.csv");
    let mut text = String::from("x,y\n");
    for k in 0..8 {
        let x = 10.0 * k as f64 / 7.0;
        text.push_str(&format!("{x:.17e},{:.17e}\n", x * x.sin()));
    }
    std::fs::write(&path, text).unwrap();
    path
}

fn training_set(path: &Path) -> TrainingSet {
    let (_, rows) = read_rows(path);
    let x = numbers(&rows, 0).into_iter().map(|v| vec![v]).collect();
    TrainingSet::new(x, numbers(&rows, 1))
        .unwrap()
        .with_names(vec!["x".into()], "y")
        .unwrap()
}

#[test]
fn fitted_emulator_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let train = training_csv(dir.path());
    let em_path = dir.path().join("em.json");
    let res = emucal(&["fit", "--training", p(&train), "--output", "y", "--out", p(&em_path)]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(String::from_utf8_lossy(&res.stdout).contains("q2_loocv"));

    let probe = dir.path().join("probe.csv");
    let grid: Vec<f64> = (0..41).map(|k| -0.5 + 11.0 * k as f64 / 40.0).collect();
    let mut text = String::from("x\n");
    for g in &grid {
        text.push_str(&format!("{g:.17e}\n"));
    }
    std::fs::write(&probe, text).unwrap();
    let pred_path = dir.path().join("pred.csv");
    let res = emucal(&[
        "predict",
        "--emulator",
        p(&em_path),
        "--points",
        p(&probe),
        "--out",
        p(&pred_path),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let (header, rows) = read_rows(&pred_path);
    assert_eq!(header, vec!["x", "mean", "sd", "lower", "upper", "extrapolated"]);

    let opts = FitOptions::default();
    let direct = fit_mle(&training_set(&train), &TrendSpec::Constant, KernelKind::Gaussian, &opts).unwrap();
    let loaded = FittedEmulator::from_json(&std::fs::read_to_string(&em_path).unwrap()).unwrap();
    for (i, g) in grid.iter().enumerate() {
        let a = direct.predict(&[*g]).unwrap();
        let b = loaded.predict(&[*g]).unwrap();
        let cli_mean: f64 = rows[i][1].parse().unwrap();
        assert!((a.mean - b.mean).abs() <= 1e-12 * a.mean.abs().max(1.0));
        assert!((a.mse - b.mse).abs() <= 1e-12 * a.mse.abs().max(1.0));
        assert!((cli_mean - a.mean).abs() <= 1e-12 * a.mean.abs().max(1.0));
    }
    assert_eq!(rows[0][5], "true");
    assert_eq!(rows[2][5], "false");
}

#[test]
fn malformed_training_cell_names_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x,y\n0,1\n1,2\n2,abc\n3,4\n").unwrap();
    let res = emucal(&[
        "fit",
        "--training",
        p(&path),
        "--output",
        "y",
        "--out",
        p(&dir.path().join("em.json")),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let msg = stderr(&res);
    assert!(msg.contains("row 3") && msg.contains("`y`"), "{msg}");
}

#[test]
fn cv_fit_records_fold_count() {
    let dir = tempfile::tempdir().unwrap();
    let train = training_csv(dir.path());
    let em_path = dir.path().join("cv.json");
    let res = emucal(&[
        "fit",
        "--training",
        p(&train),
        "--output",
        "y",
        "--method",
        "cv",
        "--folds",
        "5",
        "--kernel",
        "matern52",
        "--out",
        p(&em_path),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cv.report.json")).unwrap()).unwrap();
    assert_eq!(report["estimation"]["method"], "cv");
    assert_eq!(report["estimation"]["folds"], 5);
    assert_eq!(report["loocv"]["kind"], "loocv");
    let direct = fit_cv(
        &training_set(&train),
        &TrendSpec::Constant,
        KernelKind::Matern52,
        5,
        &FitOptions::default(),
    )
    .unwrap();
    assert_eq!(
        report["hyperparameters"]["omega"][0].as_f64().unwrap(),
        direct.hyperparameters().omega[0]
    );
}

/// The bundled demo config with its data path made absolute and `edits` applied
/// as raw text substitutions.
fn demo_config(dir: &Path, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = std::fs::read_to_string(demo_dir().join("linear.toml")).unwrap();
    let data = demo_dir().join("linear_experiments.csv");
    text = text.replace(
        "path = \"linear_experiments.csv\"",
        &format!("path = {:?}", data.to_str().unwrap()),
    );
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn demo_calibration_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let res = emucal(&[
        "calibrate",
        "--config",
        p(&demo_dir().join("linear.toml")),
        "--out",
        p(&run),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    let artifacts = manifest["artifacts"].as_array().unwrap();
    let names: Vec<&str> = artifacts.iter().map(|a| a["name"].as_str().unwrap()).collect();
    for expected in [
        "chain",
        "posterior_summary",
        "validation",
        "validation_residuals",
        "gp_bias",
        "gp_code",
    ] {
        assert!(names.contains(&expected), "{names:?}");
    }
    for a in artifacts {
        assert!(run.join(a["path"].as_str().unwrap()).is_file());
    }
    assert_eq!(manifest["stage_timings"].as_array().unwrap().len(), 5);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("posterior_summary.json")).unwrap()).unwrap();
    for (c, truth) in summary["components"].as_array().unwrap().iter().zip([2.0, 1.0]) {
        let mean = c["mean"].as_f64().unwrap();
        let std = c["std"].as_f64().unwrap();
        assert!(std > 0.0 && (mean - truth).abs() < 3.0 * std, "{c}");
    }
    assert_eq!(summary["n_samples"], 20000);
}

#[test]
fn strict_gate_fails_with_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo_config(
        dir.path(),
        &[
            ("q2_gate = 0.7", "q2_gate = 0.999"),
            (
                "model = { model = \"linear\" }",
                "model = { model = \"linear_biased\", amplitude = 0.5 }",
            ),
            ("n_train = 40", "n_train = 8"),
            (
                "kernel = \"matern_5_2\"\ntrend = { kind = \"linear\" }",
                "kernel = \"gaussian\"\ntrend = { kind = \"constant\" }",
            ),
        ],
    );
    let run = dir.path().join("run");
    let res = emucal(&["calibrate", "--config", p(&config), "--out", p(&run)]);
    assert_eq!(res.status.code(), Some(4), "{}", stderr(&res));
    assert!(stderr(&res).contains("gate failed"), "{}", stderr(&res));
    assert!(!run.join("manifest.json").exists());
}

#[test]
fn calibration_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo_config(dir.path(), &[("n_samples = 10000", "n_samples = 2000")]);
    let mut chains = Vec::new();
    for name in ["a", "b"] {
        let run = dir.path().join(name);
        let res = emucal(&["calibrate", "--config", p(&config), "--out", p(&run)]);
        assert!(res.status.success(), "{}", stderr(&res));
        chains.push(std::fs::read(run.join("chain.csv")).unwrap());
    }
    assert_eq!(chains[0], chains[1]);
}

#[test]
fn report_tables_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let config = demo_config(dir.path(), &[("n_samples = 10000", "n_samples = 3000")]);
    let run = dir.path().join("run");
    assert!(emucal(&["calibrate", "--config", p(&config), "--out", p(&run)])
        .status
        .success());
    let res = emucal(&["report", "--run", p(&run), "--bins", "25"]);
    assert!(res.status.success(), "{}", stderr(&res));
    let report = run.join("report");
    for name in ["theta1", "theta2"] {
        let (_, rows) = read_rows(&report.join(format!("histogram_{name}.csv")));
        assert_eq!(rows.len(), 25);
        assert_eq!(rows.iter().map(|r| r[2].parse::<usize>().unwrap()).sum::<usize>(), 6000);
    }
    let (_, trace) = read_rows(&report.join("trace.csv"));
    assert_eq!(trace.len(), 6000);
    for file in ["predictive_vs_observed.csv", "gp_bias_y.csv", "gp_code_y.csv"] {
        let (header, rows) = read_rows(&report.join(file));
        let col = |n: &str| header.iter().position(|h| h == n).unwrap();
        let m = col_or(&header, "mean").min(col_or(&header, "predicted"));
        let (s, lo, hi) = (col("sd"), col("lower"), col("upper"));
        for r in &rows {
            let mean: f64 = r[m].parse().unwrap();
            let sd: f64 = r[s].parse().unwrap();
            assert_eq!(r[hi].parse::<f64>().unwrap(), mean + 1.96 * sd);
            assert_eq!(r[lo].parse::<f64>().unwrap(), mean - 1.96 * sd);
        }
    }
    let (_, pvo) = read_rows(&report.join("predictive_vs_observed.csv"));
    assert_eq!(pvo.len(), 10);
}

fn col_or(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or(usize::MAX)
}

#[test]
fn report_without_manifest_fails() {
    let dir = tempfile::tempdir().unwrap();
    let res = emucal(&["report", "--run", p(dir.path())]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("manifest.json"));
}

#[test]
fn config_hash_tracks_meaning_not_formatting() {
    let dir = tempfile::tempdir().unwrap();
    let base = load_config(&demo_config(dir.path(), &[])).unwrap();
    let reordered = load_config(&demo_config(
        dir.path(),
        &[(
            "use_discrepancy = true\ncode_source = \"emulator\"",
            "code_source   =   \"emulator\"\n\nuse_discrepancy = true # same",
        )],
    ))
    .unwrap();
    let defaults_spelled_out = load_config(&demo_config(
        dir.path(),
        &[("n_chains = 2", "n_chains = 2\nthin = 1\nadapt_interval = 50")],
    ))
    .unwrap();
    let changed = load_config(&demo_config(dir.path(), &[("seed = 11", "seed = 12")])).unwrap();
    let h = config_hash(&base).unwrap();
    assert_eq!(h, config_hash(&reordered).unwrap());
    assert_eq!(h, config_hash(&defaults_spelled_out).unwrap());
    assert_ne!(h, config_hash(&changed).unwrap());

    let json = dir.path().join("config.json");
    std::fs::write(&json, serde_json::to_string(&base).unwrap()).unwrap();
    assert_eq!(h, config_hash(&load_config(&json).unwrap()).unwrap());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        demo_config(dir.path(), &[("q2_gate = 0.7", "q2_gate = 0.7\nq2_gait = 0.8")]),
        demo_config(dir.path(), &[("seed = 11\n", "")]),
    ];
    for config in cases {
        let res = emucal(&["calibrate", "--config", p(&config), "--out", p(&dir.path().join("run"))]);
        assert_eq!(res.status.code(), Some(1), "{}", stderr(&res));
    }
    let missing_data = demo_dir().join("linear.toml");
    let moved = dir.path().join("moved.toml");
    std::fs::copy(&missing_data, &moved).unwrap();
    let res = emucal(&["calibrate", "--config", p(&moved), "--out", p(&dir.path().join("run"))]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("linear_experiments.csv"));
}
