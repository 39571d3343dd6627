use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use wold_cp::{generate_scenario, Scenario, ScenarioSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wold-cp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn write_series(dir: &Path, name: &str, header: Option<&str>, values: &[f64]) -> PathBuf {
    let path = dir.join(name);
    let mut text = header.map(|h| format!("{h}\n")).unwrap_or_default();
    for v in values {
        text.push_str(&format!("{v}\n"));
    }
    fs::write(&path, text).unwrap();
    path
}

fn scenario_csv(dir: &Path, t: usize, k: usize, seed: u64) -> PathBuf {
    let spec = ScenarioSpec::new(Scenario::III, t, k).with_phi(-0.9);
    let x = generate_scenario(&spec, seed).unwrap();
    write_series(dir, "series.csv", Some("value"), x.values())
}

fn intervals(doc: &Value) -> Vec<(f64, u64, u64)> {
    doc["intervals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            (
                c["level"].as_f64().unwrap(),
                c["lower"].as_u64().unwrap(),
                c["upper"].as_u64().unwrap(),
            )
        })
        .collect()
}

#[test]
fn detect_report_on_scenario_draw() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_csv(dir.path(), 500, 250, 7);
    let out = run(&[
        "detect",
        "--input",
        path.to_str().unwrap(),
        "--column",
        "value",
        "--mc-reps",
        "4000",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = json(&out);
    assert_eq!(doc["schema_version"], 1);
    let k_tilde = doc["k_tilde"].as_u64().unwrap();
    assert!(k_tilde.abs_diff(250) <= 5, "k_tilde {k_tilde}");
    for key in [
        "k_hat",
        "model_pre",
        "model_post",
        "xi2",
        "nuisance",
        "loss_curve_stage1",
        "loss_curve_stage2",
    ] {
        assert!(!doc[key].is_null(), "missing {key}");
    }
    let p = doc["p_common"].as_u64().unwrap() as usize;
    assert!(doc["model_pre"]["phi"].as_array().unwrap().len() <= p);
    let cis = intervals(&doc);
    assert_eq!(cis.len(), 3);
    for (_, lo, hi) in &cis {
        assert!(*lo >= 1 && *lo <= k_tilde && k_tilde <= *hi && *hi <= 500);
    }
}

#[test]
fn detect_csv_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_csv(dir.path(), 300, 150, 3);
    let target = dir.path().join("out.csv");
    let out = run(&[
        "detect",
        "--input",
        path.to_str().unwrap(),
        "--mc-reps",
        "2000",
        "--format",
        "csv",
        "--output",
        target.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(target).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k_hat,k_tilde,p_common,xi2,level,lower,upper");
    assert_eq!(lines.len(), 4);
}

#[test]
fn short_headerless_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_series(
        dir.path(),
        "short.csv",
        None,
        &[1.0, 2.0, 0.5, 3.0, 1.0, 2.0, 4.0, 0.0, 1.0, 2.0],
    );
    let out = run(&[
        "detect",
        "--input",
        path.to_str().unwrap(),
        "--min-segment",
        "20",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("shorter than"));
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        run(&["detect", "--input", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let bad = write_series(dir.path(), "bad.csv", Some("x"), &[]);
    fs::write(&bad, "x\n1\n2\nfoo\n").unwrap();
    assert_eq!(
        run(&["detect", "--input", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let ok = scenario_csv(dir.path(), 300, 150, 1);
    assert_eq!(
        run(&["detect", "--input", ok.to_str().unwrap(), "--lag", "arma:2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "detect",
            "--input",
            ok.to_str().unwrap(),
            "--column",
            "nope"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run(&["detect", "--input", ok.to_str().unwrap(), "--levels", "1.5"])
            .status
            .code(),
        Some(2)
    );
    let threads = bin()
        .env("CPD_THREADS", "zero")
        .args(["quantiles", "--mc-reps", "1000"])
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn no_jump_exits_3_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_csv(dir.path(), 300, 150, 2);
    let out = run(&[
        "detect",
        "--input",
        path.to_str().unwrap(),
        "--lag",
        "fixed:0",
        "--mc-reps",
        "1000",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let doc = json(&out);
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["error"], "no_jump");
    assert!(doc["k_tilde"].is_u64());
}

#[test]
fn short_eeg_style_channel_has_nested_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ScenarioSpec::new(Scenario::II, 110, 60)
        .with_theta(-0.9)
        .with_phi(0.5);
    let x = generate_scenario(&spec, 4).unwrap();
    let path = write_series(dir.path(), "eeg.csv", Some("C3"), x.values());
    let out = run(&[
        "detect",
        "--input",
        path.to_str().unwrap(),
        "--column",
        "C3",
        "--demean",
        "--levels",
        "0.70,0.80,0.90,0.95,0.99",
        "--mc-reps",
        "4000",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cis = intervals(&json(&out));
    assert_eq!(cis.len(), 5);
    for w in cis.windows(2) {
        assert!(w[0].0 < w[1].0);
        assert!(w[1].1 <= w[0].1 && w[0].2 <= w[1].2, "{cis:?}");
    }
}

fn read_curve(path: &Path) -> Vec<(f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,density"));
    lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

#[test]
fn spectrum_of_white_noise_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    // An AR(1) with zero coefficient after the change is plain white noise.
    let spec = ScenarioSpec::new(Scenario::III, 5020, 20).with_phi(0.0);
    let x = generate_scenario(&spec, 9).unwrap();
    let path = write_series(dir.path(), "wn.csv", None, &x.values()[20..]);
    let prefix = dir.path().join("spec");
    let out = run(&[
        "spectrum",
        "--input",
        path.to_str().unwrap(),
        "--lag",
        "fixed:0",
        "--k",
        "2500",
        "--output",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = json(&out);
    assert_eq!(doc["k"], 2500);
    for side in ["pre", "post"] {
        let curve = read_curve(&dir.path().join(format!("spec_{side}.csv")));
        assert_eq!(curve.len(), 512);
        assert_eq!(curve[0].0, 0.0);
        assert_eq!(curve[511].0, std::f64::consts::PI);
        let (lo, hi) = curve.iter().fold((f64::INFINITY, 0.0f64), |(a, b), c| {
            (a.min(c.1), b.max(c.1))
        });
        assert!(lo > 0.0 && hi / lo < 1.2);
    }
}

#[test]
fn spectrum_defaults_to_detected_split() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_csv(dir.path(), 500, 250, 7);
    let prefix = dir.path().join("s");
    let out = run(&[
        "spectrum",
        "--input",
        path.to_str().unwrap(),
        "--output",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["k"].as_u64().unwrap().abs_diff(250) <= 5);
    assert!(read_curve(&dir.path().join("s_post.csv"))
        .iter()
        .all(|c| c.1 > 0.0));
}

#[test]
fn simulate_reproduces_scenario_iii_accuracy() {
    let out = run(&[
        "simulate",
        "--scenario",
        "III",
        "--phi",
        "-0.9",
        "--T",
        "500",
        "--kstar",
        "166",
        "--reps",
        "100",
        "--seed",
        "1",
        "--mc-reps",
        "1000",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc = json(&out);
    assert_eq!(doc["schema_version"], 1);
    let ab = doc["ab_tilde"].as_f64().unwrap();
    assert!((0.4..=2.5).contains(&ab), "AB {ab}");
}

#[test]
fn simulate_single_replicate_and_determinism() {
    let args = [
        "simulate",
        "--scenario",
        "II",
        "--theta",
        "-0.9",
        "--phi",
        "0.5",
        "--T",
        "300",
        "--kstar",
        "200",
        "--reps",
        "1",
        "--seed",
        "5",
        "--mc-reps",
        "1000",
        "--format",
        "csv",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(
        &header[..5],
        &[
            "Truth",
            "AB(k_hat)",
            "AB(k_tilde)",
            "RMSE(k_hat)",
            "RMSE(k_tilde)"
        ]
    );
    for (h, v) in header.iter().zip(&row) {
        if h.starts_with("CP") {
            let c: f64 = v.parse().unwrap();
            assert!(c == 0.0 || c == 1.0);
        }
    }
}

#[test]
fn simulate_rejects_invalid_spec() {
    let out = run(&[
        "simulate",
        "--scenario",
        "III",
        "--T",
        "500",
        "--kstar",
        "166",
        "--reps",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "simulate",
        "--scenario",
        "III",
        "--phi",
        "-0.9",
        "--T",
        "30",
        "--kstar",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn quantiles_symmetric_defaults() {
    let out = bin()
        .env("CPD_THREADS", "1")
        .args(["quantiles", "--mc-reps", "20000", "--seed", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["schema_version"], 1);
    assert!(doc["median"].as_f64().unwrap().abs() <= 0.5);
    let probs: Vec<f64> = doc["probs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_f64().unwrap())
        .collect();
    assert_eq!(probs, wold_cp::DEFAULT_PROBS.to_vec());
    assert_eq!(doc["truncation_warning"], false);
}

#[test]
fn quantiles_tiny_grid_warns() {
    let out = run(&[
        "quantiles",
        "--mc-R",
        "1",
        "--mc-delta",
        "0.01",
        "--mc-reps",
        "2000",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["truncation_warning"], true);
}

#[test]
fn quantiles_respects_thread_cap_determinism() {
    let a = bin()
        .env("CPD_THREADS", "1")
        .args(["quantiles", "--mc-reps", "3000", "--seed", "8"])
        .output()
        .unwrap();
    let b = bin()
        .env("CPD_THREADS", "3")
        .args(["quantiles", "--mc-reps", "3000", "--seed", "8"])
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
}
