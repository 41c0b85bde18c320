use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use koopman_core::snapshots::save_trajectory;
use koopman_core::Trajectory;
use nalgebra::{DMatrix, DVector};

fn koopman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_koopman")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_error(out: &Output, code: i32, needle: &str) {
    assert_eq!(out.status.code(), Some(code), "{}", stderr(out));
    let text = stderr(out);
    assert_eq!(text.lines().count(), 1, "{text}");
    assert!(text.starts_with("error: "), "{text}");
    assert!(text.contains(needle), "{text}");
}

fn linear_csv(dir: &Path, n: usize) -> PathBuf {
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.95 - 0.1 * i as f64 } else { 0.02 * (i + j) as f64 });
    let mut states = DMatrix::zeros(n, 40);
    let mut x = DVector::from_fn(n, |i, _| 1.0 + i as f64);
    for k in 0..40 {
        states.set_column(k, &x);
        x = &a * x;
    }
    let path = dir.join(format!("linear{n}.csv"));
    save_trajectory(&Trajectory::from_states(0.1, states).unwrap(), &path).unwrap();
    path
}

#[test]
fn simulate_writes_the_requested_samples() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pend.csv");
    let out = koopman(&[
        "simulate", "--system", "pendulum", "--x0", "0.7853981634,0", "--dt", "0.01", "--steps", "1000",
        "--out", s(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("t,theta,theta_dot,u"));
    assert_eq!(text.lines().count(), 1002);
    let summary = String::from_utf8_lossy(&out.stdout);
    assert!(summary.contains("samples: 1001") && summary.contains("final state"), "{summary}");
}

#[test]
fn equilibrium_run_is_constant() {
    let out = koopman(&["simulate", "--system", "pendulum", "--x0", "0,0", "--steps", "10"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r.ends_with(",0,0,0")), "{csv}");
}

#[test]
fn controlled_cartpole_with_negative_initial_state() {
    let out = koopman(&[
        "simulate", "--system", "cartpole", "--x0", "-1,0,3.1415926536,0", "--control", "lqr", "--q", "5,10,0,0",
        "--r", "1", "--xref", "1,0,3.1415926536,0", "--steps", "2000",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = String::from_utf8(out.stdout).unwrap();
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[1] - 1.0).abs() < 1e-2 && (last[3] - std::f64::consts::PI).abs() < 1e-2, "{last:?}");
}

#[test]
fn spec_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("run.json");
    let csv = dir.path().join("out.csv");
    fs::write(
        &spec,
        format!(r#"{{"system": "pendulum", "steps": 50, "dt": 0.05, "outputs": {{"trajectory": "{}"}}}}"#, s(&csv)),
    )
    .unwrap();
    let out = koopman(&["simulate", "--spec", s(&spec), "--steps", "20"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 22);
    assert!(text.lines().nth(2).unwrap().starts_with("0.05,"));
}

#[test]
fn usage_errors_exit_two_with_one_line() {
    assert_error(&koopman(&["simulate", "--system", "rocket"]), 2, "rocket");
    assert_error(&koopman(&["simulate", "--system", "pendulum", "--x0", "1,2,3"]), 2, "x0");
    assert_error(&koopman(&["simulate", "--system", "pendulum", "--dt", "-1"]), 2, "dt");
    assert_error(&koopman(&["simulate", "--system", "pendulum", "--param", "mass=-1"]), 2, "mass");
    assert_error(&koopman(&["simulate", "--bogus"]), 2, "bogus");
    assert_error(&koopman(&["fit", "--in", "/nonexistent/file.csv"]), 2, "nonexistent");
    assert_error(&koopman(&["fit", "--method", "edmd", "--in", "x.csv"]), 2, "--basis");
    assert_error(&koopman(&["fit", "--method", "edmd", "--basis", "wavelet:2", "--in", "x.csv"]), 2, "polynomial");
    assert_error(&koopman(&[]), 2, "");
}

#[test]
fn divergence_is_a_computational_failure() {
    let out = koopman(&["simulate", "--system", "pendulum", "--x0", "0,1e7", "--dt", "1", "--steps", "100"]);
    assert_error(&out, 1, "diverged");
}

#[test]
fn fit_prints_rank_and_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let csv = linear_csv(dir.path(), 3);
    let model = dir.path().join("m.json");
    let out = koopman(&["fit", "--method", "dmd", "--in", s(&csv), "--out", s(&model), "--rank", "auto"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("rank: 3"), "{text}");
    assert!(text.contains("|lambda|") && text.lines().count() >= 6, "{text}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(json["kind"], "dmd");
}

#[test]
fn reconstruct_linear_data_and_reject_mismatched_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let csv = linear_csv(dir.path(), 3);
    let model = dir.path().join("m.json");
    let recon = dir.path().join("r.csv");
    let metrics = dir.path().join("metrics.json");
    assert!(koopman(&["fit", "--in", s(&csv), "--out", s(&model)]).status.success());
    let out = koopman(&[
        "reconstruct", "--model", s(&model), "--in", s(&csv), "--out", s(&recon), "--metrics", s(&metrics),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    let rel: Vec<f64> = report["relative_rmse"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(rel.len(), 3);
    assert!(rel.iter().all(|&r| r < 1e-6), "{rel:?}");
    assert_eq!(fs::read_to_string(&recon).unwrap().lines().count(), 41);

    let other = linear_csv(dir.path(), 2);
    assert_error(&koopman(&["reconstruct", "--model", s(&model), "--in", s(&other)]), 2, "dimension");
}

#[test]
fn eigen_reports_linear_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let csv = linear_csv(dir.path(), 2);
    let json = dir.path().join("eig.json");
    let out = koopman(&["eigen", "--in", s(&csv), "--basis", "states", "--top", "2", "--json", s(&json)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let dump: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let pairs = dump["eigenpairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 2);
    for p in pairs {
        assert!(p["linearity_residual"].as_f64().unwrap() < 1e-8, "{p}");
    }
    assert_error(&koopman(&["eigen", "--in", s(&csv), "--top", "0"]), 2, "--top");
}

#[test]
fn eigen_on_pendulum_poly2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("pend.csv");
    assert!(koopman(&["simulate", "--system", "pendulum", "--out", s(&csv)]).status.success());
    let out = koopman(&["eigen", "--in", s(&csv), "--basis", "poly:2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).collect();
    assert_eq!(rows.len(), 5, "{text}");
    for row in rows {
        let residual: f64 = row.split_whitespace().last().unwrap().parse().unwrap();
        assert!(residual.is_finite());
    }
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut pending = vec![root.to_path_buf()];
    while let Some(dir) = pending.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                pending.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn repro_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = koopman(&["repro", "--out-dir", s(d)]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let files = files_under(&a);
    assert_eq!(files, files_under(&b));
    assert_eq!(files.len(), 20 * 4 + 2, "{files:?}");
    for f in files {
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{}", f.display());
    }
}
