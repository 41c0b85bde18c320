//! The full reconstruction sweep: {pendulum, cartpole} × {uncontrolled,
//! lqr} × {dmd, poly2, poly3, fourier1, fourier2}.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use koopman_core::snapshots::{write_matrix_csv, write_model, write_trajectory};
use koopman_core::{BasisSpec, Dictionary, RankPolicy, SystemKind, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands::{emit, fit_model, reconstruct_against, run_simulation, write_report_json};
use crate::error::{CliError, CliResult};
use crate::spec::{ControlMode, Fit, Method, RunSpec, Simulation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMethod {
    Dmd,
    Poly2,
    Poly3,
    Fourier1,
    Fourier2,
}

impl SweepMethod {
    pub const ALL: [SweepMethod; 5] = [
        SweepMethod::Dmd,
        SweepMethod::Poly2,
        SweepMethod::Poly3,
        SweepMethod::Fourier1,
        SweepMethod::Fourier2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepMethod::Dmd => "dmd",
            SweepMethod::Poly2 => "poly2",
            SweepMethod::Poly3 => "poly3",
            SweepMethod::Fourier1 => "fourier1",
            SweepMethod::Fourier2 => "fourier2",
        }
    }

    /// Poly3 is the untruncated variant: rank equal to the number of observables.
    fn fit(self, n: usize) -> CliResult<Fit> {
        let edmd = |basis: BasisSpec, rank| Fit {
            method: Method::Edmd,
            basis: Some(basis),
            rank,
        };
        Ok(match self {
            SweepMethod::Dmd => Fit {
                method: Method::Dmd,
                basis: None,
                rank: RankPolicy::Auto,
            },
            SweepMethod::Poly2 => edmd(BasisSpec::polynomial(2), RankPolicy::Auto),
            SweepMethod::Poly3 => {
                let p = Dictionary::polynomial(n, 3)?.lifted_dim();
                edmd(BasisSpec::polynomial(3), RankPolicy::Explicit(p))
            }
            SweepMethod::Fourier1 => edmd(BasisSpec::fourier(1), RankPolicy::Auto),
            SweepMethod::Fourier2 => edmd(BasisSpec::fourier(2), RankPolicy::Auto),
        })
    }
}

fn control_name(c: ControlMode) -> &'static str {
    match c {
        ControlMode::None => "uncontrolled",
        ControlMode::Lqr => "lqr",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub name: String,
    pub system: SystemKind,
    pub control: String,
    pub method: SweepMethod,
    pub state_names: Vec<String>,
    pub rank: Option<usize>,
    /// Explicit rank that was reduced to the numerical rank.
    pub requested_rank: Option<usize>,
    pub relative_rmse: Option<Vec<f64>>,
    pub per_state_rmse: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub dt: f64,
    pub steps: usize,
    pub cells: Vec<CellOutcome>,
}

impl SweepSummary {
    pub fn cell(&self, system: SystemKind, control: &str, method: SweepMethod) -> Option<&CellOutcome> {
        self.cells
            .iter()
            .find(|c| c.system == system && c.control == control && c.method == method)
    }
}

struct Scenario {
    system: SystemKind,
    control: ControlMode,
    trajectory: Result<Trajectory, String>,
}

fn scenario_spec(system: SystemKind, control: ControlMode, dt: f64, steps: usize) -> RunSpec {
    RunSpec {
        system: Some(system),
        dt: Some(dt),
        steps: Some(steps),
        control: Some(control),
        ..RunSpec::default()
    }
}

fn run_scenario(system: SystemKind, control: ControlMode, dt: f64, steps: usize) -> Scenario {
    let trajectory = Simulation::from_spec(&scenario_spec(system, control, dt, steps))
        .and_then(|sim| run_simulation(&sim))
        .map_err(|e| e.message);
    Scenario {
        system,
        control,
        trajectory,
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> CliResult<()> {
    emit(Some(path), body)
}

/// Runs one cell. Numerical failures are returned as the outcome's error;
/// only file-system failures abort.
fn run_cell(scenario: &Scenario, method: SweepMethod, out_dir: &Path) -> CliResult<CellOutcome> {
    let name = format!(
        "{}-{}-{}",
        scenario.system,
        control_name(scenario.control),
        method.name()
    );
    let mut outcome = CellOutcome {
        name: name.clone(),
        system: scenario.system,
        control: control_name(scenario.control).to_string(),
        method,
        state_names: scenario.system.state_names().iter().map(|s| s.to_string()).collect(),
        rank: None,
        requested_rank: None,
        relative_rmse: None,
        per_state_rmse: None,
        error: None,
    };
    let dir = out_dir.join(&name);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let traj = match &scenario.trajectory {
        Ok(t) => t,
        Err(msg) => {
            outcome.error = Some(format!("simulation failed: {msg}"));
            return Ok(outcome);
        }
    };
    write_file(&dir.join("trajectory.csv"), |w| write_trajectory(traj, w))?;

    let fitted = method
        .fit(traj.dim())
        .and_then(|fit| fit_model(traj, &fit))
        .and_then(|model| reconstruct_against(&model, traj).map(|r| (model, r)));
    let (model, (recon, report)) = match fitted {
        Ok(v) => v,
        Err(e) if e.code == crate::error::EXIT_FAILURE => {
            outcome.error = Some(e.message);
            return Ok(outcome);
        }
        Err(e) => return Err(e),
    };
    write_file(&dir.join("model.json"), |w| write_model(&model, w))?;
    write_file(&dir.join("reconstruction.csv"), |w| {
        write_matrix_csv(w, traj.state_names(), traj.dt(), &recon)
    })?;
    write_report_json(Some(&dir.join("metrics.json")), &report)?;
    outcome.rank = Some(model.dmd().rank);
    outcome.requested_rank = model.dmd().diagnostics.requested_rank;
    outcome.relative_rmse = Some(report.relative_rmse);
    outcome.per_state_rmse = Some(report.per_state_rmse);
    Ok(outcome)
}

pub fn run_sweep(out_dir: &Path, dt: f64, steps: usize) -> CliResult<SweepSummary> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let combos: Vec<(SystemKind, ControlMode)> = [SystemKind::Pendulum, SystemKind::CartPole]
        .into_iter()
        .flat_map(|s| [ControlMode::None, ControlMode::Lqr].map(|c| (s, c)))
        .collect();
    let scenarios: Vec<Scenario> = combos
        .par_iter()
        .map(|&(s, c)| run_scenario(s, c, dt, steps))
        .collect();
    let jobs: Vec<(&Scenario, SweepMethod)> = scenarios
        .iter()
        .flat_map(|s| SweepMethod::ALL.map(|m| (s, m)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(s, m)| run_cell(s, m, out_dir))
        .collect::<CliResult<Vec<_>>>()?;
    let summary = SweepSummary { dt, steps, cells };
    write_file(&out_dir.join("summary.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        writeln!(w)
    })?;
    let table = summary_markdown(&summary);
    write_file(&out_dir.join("summary.md"), |w| w.write_all(table.as_bytes()))?;
    Ok(summary)
}

pub fn summary_markdown(summary: &SweepSummary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Reconstruction sweep\n");
    let _ = writeln!(
        s,
        "Relative RMSE of each reconstruction against its training trajectory (dt = {}, {} samples).\n",
        summary.dt,
        summary.steps + 1
    );
    let _ = writeln!(s, "| system | control | method | rank | relative RMSE | max |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for c in &summary.cells {
        let (rank, errors, max) = match (&c.relative_rmse, &c.error) {
            (Some(rel), _) => {
                let per: Vec<String> = c
                    .state_names
                    .iter()
                    .zip(rel)
                    .map(|(n, v)| format!("{n} {v:.3e}"))
                    .collect();
                let max = rel.iter().cloned().fold(0.0, f64::max);
                let rank = match (c.rank, c.requested_rank) {
                    (Some(r), Some(req)) => format!("{r} (requested {req})"),
                    (Some(r), None) => r.to_string(),
                    _ => "-".to_string(),
                };
                (
                    rank,
                    per.join(", "),
                    format!("{max:.3e}"),
                )
            }
            (None, err) => (
                "-".to_string(),
                format!("failed: {}", err.as_deref().unwrap_or("unknown")),
                "-".to_string(),
            ),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {rank} | {errors} | {max} |",
            c.system,
            c.control,
            c.method.name()
        );
    }
    s
}
