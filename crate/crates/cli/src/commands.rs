//! The single-run subcommands.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use koopman_core::edmd::{linearity_residual, KoopmanEigenpair};
use koopman_core::metrics::ErrorReport;
use koopman_core::snapshots::{
    load_model, load_trajectory, write_matrix_csv, write_model, write_trajectory,
};
use koopman_core::{
    build_snapshots, compare, fit_dmd, fit_edmd, koopman_eigenfunctions, simulate, BasisSpec,
    Dictionary, FeedbackLaw, Model, Trajectory, C64,
};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::spec::{Fit, Method, Simulation};

/// Writes to `path`, or to stdout when there is none.
pub fn emit(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult<()> {
    match path {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            let mut w = BufWriter::new(file);
            body(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(path, e))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock).map_err(|e| CliError::failure(format!("stdout: {e}")))
        }
    }
}

/// Human-readable summaries go to stdout unless stdout carries the data.
pub struct Report {
    to_stderr: bool,
}

impl Report {
    pub fn new(data_on_stdout: bool) -> Report {
        Report {
            to_stderr: data_on_stdout,
        }
    }

    pub fn line(&self, text: impl AsRef<str>) {
        if self.to_stderr {
            eprintln!("{}", text.as_ref());
        } else {
            println!("{}", text.as_ref());
        }
    }
}

pub fn run_simulation(sim: &Simulation) -> CliResult<Trajectory> {
    let law = sim.controller.as_ref().map(|c| c as &dyn FeedbackLaw);
    Ok(simulate(&sim.system, &sim.x0, sim.dt, sim.steps, law)?)
}

fn format_vector(v: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = v.into_iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn cmd_simulate(sim: &Simulation, out: Option<&Path>) -> CliResult<()> {
    let traj = run_simulation(sim)?;
    emit(out, |w| write_trajectory(&traj, w))?;
    let report = Report::new(out.is_none());
    report.line(format!("system: {}", sim.system.kind()));
    report.line(format!("samples: {} (dt = {})", traj.len(), traj.dt()));
    report.line(format!("final state: {}", format_vector(traj.last_state().iter().cloned())));
    if let Some(c) = &sim.controller {
        report.line(format!("lqr gain: {}", format_vector(c.k.iter().cloned())));
    }
    Ok(())
}

pub fn fit_model(traj: &Trajectory, fit: &Fit) -> CliResult<Model> {
    Ok(match (fit.method, fit.basis) {
        (Method::Dmd, _) => Model::Dmd(fit_dmd(&build_snapshots(traj)?, fit.rank)?),
        (Method::Edmd, Some(spec)) => {
            let dict = Dictionary::new(spec, traj.dim())?;
            Model::Edmd(fit_edmd(traj, &dict, fit.rank)?)
        }
        (Method::Edmd, None) => return Err(CliError::usage("--method edmd needs --basis")),
    })
}

fn eigen_table(report: &Report, model: &Model) {
    let dmd = model.dmd();
    report.line(format!(
        "{:>4} {:>12} {:>12} {:>14} {:>14}",
        "k", "|lambda|", "arg lambda", "Re omega", "Im omega"
    ));
    for (k, (lambda, omega)) in dmd.eigenvalues.iter().zip(&dmd.continuous_eigenvalues).enumerate() {
        let omega = match omega {
            Some(w) => format!("{:>14.6} {:>14.6}", w.re, w.im),
            None => format!("{:>14} {:>14}", "-", "-"),
        };
        report.line(format!(
            "{:>4} {:>12.8} {:>12.8} {omega}",
            k + 1,
            lambda.norm(),
            lambda.arg()
        ));
    }
}

pub fn cmd_fit(input: &Path, fit: &Fit, out: Option<&Path>) -> CliResult<()> {
    let traj = load_trajectory(input)?;
    let model = fit_model(&traj, fit)?;
    emit(out, |w| write_model(&model, w))?;
    let report = Report::new(out.is_none());
    let dmd = model.dmd();
    let method = match model.basis() {
        Some(basis) => format!("edmd ({basis}, {} observables)", dmd.dim()),
        None => "dmd".to_string(),
    };
    report.line(format!("method: {method}"));
    report.line(format!(
        "rank: {} (policy {}, {} snapshot pairs, dt = {})",
        dmd.rank,
        fit.rank,
        traj.len() - 1,
        dmd.dt
    ));
    if let Some(r) = dmd.diagnostics.requested_rank {
        report.line(format!("note: requested rank {r} reduced to the numerical rank {}", dmd.rank));
    }
    eigen_table(&report, &model);
    Ok(())
}

pub fn reconstruct_against(model: &Model, traj: &Trajectory) -> CliResult<(DMatrix<f64>, ErrorReport)> {
    if model.state_dim() != traj.dim() {
        return Err(CliError::usage(format!(
            "dimension mismatch: model has {} states, trajectory has {}",
            model.state_dim(),
            traj.dim()
        )));
    }
    let recon = model.reconstruct(&traj.times())?;
    let report = compare(traj, &recon)?;
    Ok((recon, report))
}

pub fn write_report_json(path: Option<&Path>, report: &ErrorReport) -> CliResult<()> {
    emit(path, |w| {
        serde_json::to_writer_pretty(&mut *w, report)?;
        writeln!(w)
    })
}

pub fn cmd_reconstruct(
    model_path: &Path,
    input: &Path,
    out: Option<&Path>,
    metrics: Option<&Path>,
) -> CliResult<()> {
    let model = load_model(model_path)?;
    let traj = load_trajectory(input)?;
    let (recon, report) = reconstruct_against(&model, &traj)?;
    emit(out, |w| write_matrix_csv(w, traj.state_names(), traj.dt(), &recon))?;
    if let Some(path) = metrics {
        write_report_json(Some(path), &report)?;
    }
    let summary = Report::new(out.is_none());
    summary.line(format!("{:>12} {:>14} {:>14} {:>14}", "state", "rmse", "relative", "max abs"));
    for (i, name) in traj.state_names().iter().enumerate() {
        summary.line(format!(
            "{:>12} {:>14.6e} {:>14.6e} {:>14.6e}",
            name, report.per_state_rmse[i], report.relative_rmse[i], report.max_abs[i]
        ));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct EigenRecord {
    index: usize,
    eigenvalue: [f64; 2],
    modulus: f64,
    argument: f64,
    linearity_residual: f64,
    coefficients: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
struct EigenDump {
    basis: String,
    observables: usize,
    rank_deficient: bool,
    eigenpairs: Vec<EigenRecord>,
}

fn pair_record(index: usize, pair: &KoopmanEigenpair, residual: f64) -> EigenRecord {
    let z: C64 = pair.eigenvalue;
    EigenRecord {
        index,
        eigenvalue: [z.re, z.im],
        modulus: z.norm(),
        argument: z.arg(),
        linearity_residual: residual,
        coefficients: pair.coefficients.iter().map(|c| [c.re, c.im]).collect(),
    }
}

pub fn cmd_eigen(input: &Path, basis: BasisSpec, top: usize, json: Option<&Path>) -> CliResult<()> {
    if top == 0 {
        return Err(CliError::usage("--top must be at least 1"));
    }
    let traj = load_trajectory(input)?;
    let dict = Dictionary::new(basis, traj.dim())?;
    let set = koopman_eigenfunctions(&traj, &dict)?;
    let mut records = Vec::new();
    for (k, pair) in set.pairs.iter().take(top).enumerate() {
        let residual = linearity_residual(pair, &dict, &traj)?;
        records.push(pair_record(k + 1, pair, residual));
    }
    println!("basis: {basis} ({} observables)", dict.lifted_dim());
    if set.rank_deficient {
        println!("note: lifted data matrix is rank deficient; minimum-norm solution used");
    }
    println!("{:>4} {:>12} {:>12} {:>14}", "k", "|lambda|", "arg lambda", "residual");
    for r in &records {
        println!(
            "{:>4} {:>12.8} {:>12.8} {:>14.6e}",
            r.index, r.modulus, r.argument, r.linearity_residual
        );
    }
    if let Some(path) = json {
        let dump = EigenDump {
            basis: basis.to_string(),
            observables: dict.lifted_dim(),
            rank_deficient: set.rank_deficient,
            eigenpairs: records,
        };
        emit(Some(path), |w| {
            serde_json::to_writer_pretty(&mut *w, &dump)?;
            writeln!(w)
        })?;
    }
    Ok(())
}
