//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use koopman_cli::repro::{SweepMethod, SweepSummary};
use koopman_core::control::care_residual;
use koopman_core::edmd::linearity_residual;
use koopman_core::snapshots::{load_model, load_trajectory, save_model, save_trajectory};
use koopman_core::{
    build_snapshots, fit_dmd, fit_edmd, koopman_eigenfunctions, linearize, lqr_gain, reconstruct,
    simulate, solve_care, Dictionary, FeedbackLaw, LqrWeights, PendulumParams, RankPolicy, System,
    SystemKind, Trajectory, C64,
};
use nalgebra::{DMatrix, DVector};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn orbit(a: &DMatrix<f64>, x1: &[f64], m: usize, dt: f64) -> Trajectory {
    let mut states = DMatrix::zeros(x1.len(), m);
    let mut x = DVector::from_column_slice(x1);
    for k in 0..m {
        states.set_column(k, &x);
        x = a * x;
    }
    Trajectory::from_states(dt, states).unwrap()
}

fn diag_orbit() -> Trajectory {
    orbit(&DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.5])), &[1.0, 1.0], 10, 1.0)
}

fn distance_to_nearest(values: &[C64], target: C64) -> f64 {
    values.iter().map(|v| (v - target).norm()).fold(f64::INFINITY, f64::min)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn criterion_1() -> Outcome {
    let ((eig_err, recon_err), took) = timed(|| {
        let traj = diag_orbit();
        let model = fit_dmd(&build_snapshots(&traj).unwrap(), RankPolicy::Auto).unwrap();
        let eig_err = [0.9, 0.5]
            .iter()
            .map(|&l| distance_to_nearest(&model.eigenvalues, C64::new(l, 0.0)))
            .fold(0.0, f64::max);
        let recon = reconstruct(&model, &traj.times()).unwrap();
        let recon_err = (0..traj.len())
            .map(|k| (recon.column(k) - traj.states().column(k)).norm() / traj.states().column(k).norm())
            .fold(0.0, f64::max);
        (eig_err, recon_err)
    });
    outcome(
        eig_err < 1e-8 && recon_err < 1e-6 && took < Duration::from_secs(1),
        format!("eigenvalue error {eig_err:.2e}, max relative reconstruction error {recon_err:.2e}, {took:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let (err, took) = timed(|| {
        let (s, c) = 0.1f64.sin_cos();
        let a = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let traj = orbit(&a, &[1.0, 0.0], 10, 1.0);
        let model = fit_dmd(&build_snapshots(&traj).unwrap(), RankPolicy::Auto).unwrap();
        let err = [0.1, -0.1]
            .iter()
            .map(|&w| distance_to_nearest(&model.eigenvalues, C64::from_polar(1.0, w)))
            .fold(0.0, f64::max);
        let conj = (model.eigenvalues[0] - model.eigenvalues[1].conj()).norm();
        err.max(conj)
    });
    outcome(
        err < 1e-8 && took < Duration::from_secs(1),
        format!("e^(±0.1i) error {err:.2e} (conjugate pair), {took:.2?}"),
    )
}

fn criterion_3() -> Outcome {
    let (err, took) = timed(|| {
        let dict = Dictionary::polynomial(2, 2).unwrap();
        let model = fit_edmd(&diag_orbit(), &dict, RankPolicy::Auto).unwrap();
        [1.0, 0.9, 0.5, 0.81, 0.45, 0.25]
            .iter()
            .map(|&l| distance_to_nearest(&model.inner.eigenvalues, C64::new(l, 0.0)))
            .fold(0.0, f64::max)
    });
    outcome(
        err < 1e-6 && took < Duration::from_secs(1),
        format!("poly2 spectrum {{1, .9, .5, .81, .45, .25}} error {err:.2e}, {took:.2?}"),
    )
}

fn criterion_4() -> Outcome {
    let traj = diag_orbit();
    let mut worst_linear: f64 = 0.0;
    let mut count = 0;
    for dict in [Dictionary::states(2), Dictionary::polynomial(2, 2).unwrap()] {
        let set = koopman_eigenfunctions(&traj, &dict).unwrap();
        for pair in &set.pairs {
            worst_linear = worst_linear.max(linearity_residual(pair, &dict, &traj).unwrap());
            count += 1;
        }
    }
    let pendulum = System::Pendulum(PendulumParams::default());
    let swing = simulate(&pendulum, &[FRAC_PI_4, 0.0], 0.01, 1000, None).unwrap();
    let dict = Dictionary::polynomial(2, 2).unwrap();
    let set = koopman_eigenfunctions(&swing, &dict).unwrap();
    let top = &set.pairs[0];
    let top_residual = linearity_residual(top, &dict, &swing).unwrap();
    outcome(
        worst_linear < 1e-6 && top_residual.is_finite(),
        format!(
            "linear data: max residual {worst_linear:.2e} over {count} eigenpairs; pendulum poly2 top eigenpair λ = {:.6}{:+.6}i, residual {top_residual:.3e}",
            top.eigenvalue.re, top.eigenvalue.im
        ),
    )
}

fn criterion_5() -> Outcome {
    let pendulum = System::Pendulum(PendulumParams::default());
    let end = |dt: f64, steps: usize| {
        simulate(&pendulum, &[FRAC_PI_4, 0.0], dt, steps, None)
            .unwrap()
            .last_state()
    };
    let reference = end(1e-5, 100_000);
    let ratio = (end(0.01, 100) - &reference).norm() / (end(0.005, 200) - &reference).norm();

    let p = PendulumParams::default();
    let energy = |x: DVector<f64>| {
        0.5 * p.mass * p.length * p.length * x[1] * x[1] + p.mass * p.gravity * p.length * x[0].cos()
    };
    let traj = simulate(&pendulum, &[FRAC_PI_4, 0.0], 0.001, 10_000, None).unwrap();
    let e0 = energy(traj.state(0));
    let drift = (0..traj.len())
        .map(|k| ((energy(traj.state(k)) - e0) / e0).abs())
        .fold(0.0, f64::max);
    outcome(
        (12.0..=20.0).contains(&ratio) && drift < 1e-6,
        format!("error ratio {ratio:.3}, relative energy drift {drift:.2e}"),
    )
}

/// Integrates the closed loop and returns the last time the state was
/// outside the band around `x_ref`, the final deviation and the ARE check.
fn closed_loop(system: System, x0: &[f64], q: &[f64], x_ref: &[f64], horizon: f64) -> (f64, f64, f64, f64) {
    let weights = LqrWeights::diagonal(q, &[1.0]).unwrap();
    let lin = linearize(&system, x_ref).unwrap();
    let ctrl = lqr_gain(&lin, &weights, x_ref).unwrap();
    let dt = 0.01;
    let steps = (horizon / dt).round() as usize;
    let traj = simulate(&system, x0, dt, steps, Some(&ctrl as &dyn FeedbackLaw)).unwrap();
    let target = DVector::from_column_slice(x_ref);
    let dev = |k: usize| (traj.state(k) - &target).amax();
    let settle = (0..traj.len())
        .rev()
        .find(|&k| dev(k) >= 1e-2)
        .map_or(0.0, |k| (k + 1) as f64 * dt);
    let residual = care_residual(&lin.a, &lin.b, &weights.q, &weights.r, &ctrl.p);
    let bound = 1e-8 * (1.0 + ctrl.p.norm());
    (settle, dev(traj.len() - 1), residual, bound)
}

fn criterion_6() -> Outcome {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let q = DMatrix::identity(2, 2);
    let r = DMatrix::identity(1, 1);
    let p = solve_care(&a, &b, &q, &r).unwrap();
    let k = b.transpose() * &p;
    let gain_err = (k[(0, 0)] - 1.0).abs().max((k[(0, 1)] - 3f64.sqrt()).abs());
    let di_ok = care_residual(&a, &b, &q, &r, &p) < 1e-8 * (1.0 + p.norm());

    let (p_settle, p_final, p_res, p_bound) = closed_loop(
        System::Pendulum(PendulumParams::default()),
        &[FRAC_PI_4, 0.0],
        &[0.0, 10.0],
        &[0.0, 0.0],
        10.0,
    );
    let (c_settle, c_final, c_res, c_bound) = closed_loop(
        System::default_for(SystemKind::CartPole),
        &[-1.0, 0.0, PI, 0.0],
        &[5.0, 10.0, 0.0, 0.0],
        &[1.0, 0.0, PI, 0.0],
        20.0,
    );
    let pass = gain_err < 1e-8
        && di_ok
        && p_final < 1e-2
        && c_final < 1e-2
        && p_res < p_bound
        && c_res < c_bound;
    outcome(
        pass,
        format!(
            "double-integrator gain error {gain_err:.2e}; pendulum within 1e-2 from t = {p_settle:.2} s (final {p_final:.1e}); \
             cart-pole within 1e-2 of [1,0,π,0] from t = {c_settle:.2} s (final {c_final:.1e}); \
             ARE residuals {p_res:.1e}, {c_res:.1e}"
        ),
    )
}

fn koopman() -> Command {
    Command::new(env!("CARGO_BIN_EXE_koopman"))
}

fn rel(summary: &SweepSummary, system: SystemKind, control: &str, method: SweepMethod) -> Result<Vec<f64>, String> {
    let cell = summary
        .cell(system, control, method)
        .ok_or_else(|| format!("no {system}/{control}/{method:?} cell"))?;
    cell.relative_rmse
        .clone()
        .ok_or_else(|| cell.error.clone().unwrap_or_default())
}

fn fmt_values(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn criterion_7(dir: &Path) -> Outcome {
    let out_dir = dir.join("sweep");
    let (status, took) = timed(|| koopman().arg("repro").arg("--out-dir").arg(&out_dir).output().unwrap());
    if !status.status.success() {
        return outcome(false, format!("repro failed: {}", String::from_utf8_lossy(&status.stderr)));
    }
    let summary: SweepSummary =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    let has_table = out_dir.join("summary.md").exists() && summary.cells.len() == 20;

    let mut parts = Vec::new();
    let mut pass = has_table && took < Duration::from_secs(60);

    let mut a_ok = true;
    let mut a_text = Vec::new();
    for control in ["uncontrolled", "lqr"] {
        match rel(&summary, SystemKind::Pendulum, control, SweepMethod::Dmd) {
            Ok(v) => {
                let ok = v.iter().all(|x| x.is_finite() && *x < 1.0);
                a_ok &= ok;
                a_text.push(format!("{control} {}", fmt_values(&v)));
            }
            Err(e) => {
                a_ok = false;
                a_text.push(format!("{control} failed: {e}"));
            }
        }
    }
    parts.push(format!("7a {} (pendulum dmd {})", if a_ok { "pass" } else { "FAIL" }, a_text.join("; ")));
    pass &= a_ok;

    let b = rel(&summary, SystemKind::Pendulum, "lqr", SweepMethod::Poly2)
        .and_then(|e| rel(&summary, SystemKind::Pendulum, "lqr", SweepMethod::Dmd).map(|d| (e, d)));
    let b_ok = match &b {
        Ok((e, d)) => {
            let ok = e.iter().zip(d).all(|(e, d)| *e <= d * 1.05);
            parts.push(format!(
                "7b {} (controlled pendulum poly2 {} vs dmd {})",
                if ok { "pass" } else { "FAIL" },
                fmt_values(e),
                fmt_values(d)
            ));
            ok
        }
        Err(e) => {
            parts.push(format!("7b FAIL ({e})"));
            false
        }
    };
    pass &= b_ok;

    let c = rel(&summary, SystemKind::CartPole, "uncontrolled", SweepMethod::Dmd)
        .and_then(|cp| rel(&summary, SystemKind::Pendulum, "uncontrolled", SweepMethod::Dmd).map(|p| (cp, p)));
    let c_ok = match &c {
        Ok((cp, p)) => {
            let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
            let ok = max(cp) > max(p);
            parts.push(format!(
                "7c {} (uncontrolled cart-pole dmd {} vs pendulum {})",
                if ok { "pass" } else { "FAIL" },
                fmt_values(cp),
                fmt_values(p)
            ));
            ok
        }
        Err(e) => {
            parts.push(format!("7c FAIL ({e})"));
            false
        }
    };
    pass &= c_ok;
    parts.push(format!("sweep {} cells in {took:.2?}", summary.cells.len()));
    outcome(pass, parts.join("; "))
}

fn criterion_8(dir: &Path) -> Outcome {
    let csv = dir.join("pend.csv");
    let csv2 = dir.join("pend_again.csv");
    let ran = koopman()
        .args(["simulate", "--system", "pendulum", "--x0", "0.7853981634,0", "--dt", "0.01", "--steps", "1000", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    if !ran.status.success() {
        return outcome(false, format!("simulate failed: {}", String::from_utf8_lossy(&ran.stderr)));
    }
    let traj = load_trajectory(&csv).unwrap();
    save_trajectory(&traj, &csv2).unwrap();
    let traj_ok = load_trajectory(&csv2).unwrap() == traj && std::fs::read(&csv).unwrap() == std::fs::read(&csv2).unwrap();

    let mut identical = true;
    let mut lossless = true;
    for (tag, extra) in [("dmd", vec!["--method", "dmd"]), ("edmd", vec!["--method", "edmd", "--basis", "poly:2"])] {
        let fit = |input: &Path, out: &Path| {
            koopman()
                .arg("fit")
                .args(&extra)
                .arg("--in")
                .arg(input)
                .arg("--out")
                .arg(out)
                .output()
                .unwrap()
                .status
                .success()
        };
        let (m1, m2, m3) = (
            dir.join(format!("{tag}1.json")),
            dir.join(format!("{tag}2.json")),
            dir.join(format!("{tag}3.json")),
        );
        if !(fit(&csv, &m1) && fit(&csv2, &m2)) {
            return outcome(false, format!("fit {tag} failed"));
        }
        identical &= std::fs::read(&m1).unwrap() == std::fs::read(&m2).unwrap();
        let model = load_model(&m1).unwrap();
        save_model(&model, &m3).unwrap();
        lossless &= load_model(&m3).unwrap() == model && std::fs::read(&m1).unwrap() == std::fs::read(&m3).unwrap();
    }
    outcome(
        traj_ok && identical && lossless,
        format!(
            "trajectory round trip {}, model round trip {}, refit after round trip {}",
            if traj_ok { "lossless" } else { "LOSSY" },
            if lossless { "lossless" } else { "LOSSY" },
            if identical { "byte-identical" } else { "DIFFERS" }
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let results = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(dir.path()),
        criterion_8(dir.path()),
    ];
    let mut failed = 0;
    for (i, r) in results.iter().enumerate() {
        println!("{} criterion {}: {}", if r.pass { "PASS" } else { "FAIL" }, i + 1, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
