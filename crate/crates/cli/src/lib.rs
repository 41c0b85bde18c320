//! Command-line driver: simulate the benchmark plants, fit DMD/EDMD models,
//! reconstruct trajectories, inspect eigenfunctions and run the full sweep.

pub mod commands;
pub mod error;
pub mod repro;
pub mod spec;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use koopman_core::{BasisSpec, SystemKind};

use crate::error::{CliError, CliResult, EXIT_USAGE};
use crate::spec::{ControlMode, Fit, Method, OutputPaths, RunSpec, Simulation};

#[derive(Debug, Parser)]
#[command(name = "koopman", version, about = "Koopman operator models from trajectory data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a plant and write its trajectory CSV.
    Simulate(SimulateArgs),
    /// Fit a DMD or EDMD model to a trajectory CSV.
    Fit(FitArgs),
    /// Reconstruct a trajectory from a model and report the error.
    Reconstruct(ReconstructArgs),
    /// List approximate Koopman eigenfunctions with linearity residuals.
    Eigen(EigenArgs),
    /// Run every system/control/method combination.
    Repro(ReproArgs),
}

fn parse_system(s: &str) -> Result<SystemKind, String> {
    s.parse().map_err(|e: koopman_core::Error| e.to_string())
}

fn parse_basis(s: &str) -> Result<BasisSpec, String> {
    s.parse().map_err(|e: koopman_core::Error| e.to_string())
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let value: f64 = value
        .parse()
        .map_err(|_| format!("parameter `{name}`: `{value}` is not a number"))?;
    Ok((name.trim().to_string(), value))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Run spec JSON; flags given here override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_parser = parse_system)]
    pub system: Option<SystemKind>,
    /// Parameter override, e.g. `length=1.5`. Repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum)]
    pub control: Option<ControlMode>,
    /// Diagonal state weights.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q: Option<Vec<f64>>,
    /// Diagonal input weights.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub r: Option<Vec<f64>>,
    /// Set point for the regulator; also the linearization point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub xref: Option<Vec<f64>>,
    /// Trajectory CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// `poly:<order>`, `fourier:<order>` or `states`.
    #[arg(long)]
    pub basis: Option<String>,
    /// Trajectory CSV.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Model JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `auto` or a positive integer.
    #[arg(long)]
    pub rank: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Reference trajectory CSV.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Reconstruction CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Error report JSON.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EigenArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_basis, default_value = "states")]
    pub basis: BasisSpec,
    /// Number of eigenpairs to report, largest |λ| first.
    #[arg(long, default_value_t = 5)]
    pub top: usize,
    /// Also write the eigenpairs as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = spec::DEFAULT_DT, allow_hyphen_values = true)]
    pub dt: f64,
    #[arg(long, default_value_t = spec::DEFAULT_STEPS)]
    pub steps: usize,
}

fn with_file(spec: &Option<PathBuf>, flags: RunSpec) -> CliResult<RunSpec> {
    Ok(match spec {
        Some(path) => RunSpec::load(path)?.overlay(flags),
        None => flags,
    })
}

fn required(path: Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    path.ok_or_else(|| CliError::usage(format!("missing {flag}")))
}

pub fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(a) => {
            let flags = RunSpec {
                system: a.system,
                params: a.params.into_iter().collect(),
                x0: a.x0,
                dt: a.dt,
                steps: a.steps,
                control: a.control,
                q: a.q,
                r: a.r,
                x_ref: a.xref,
                outputs: OutputPaths {
                    trajectory: a.out,
                    ..OutputPaths::default()
                },
                ..RunSpec::default()
            };
            let spec = with_file(&a.spec, flags)?;
            let sim = Simulation::from_spec(&spec)?;
            commands::cmd_simulate(&sim, spec.outputs.trajectory.as_deref())
        }
        Command::Fit(a) => {
            let flags = RunSpec {
                method: a.method,
                basis: a.basis,
                rank: a.rank,
                outputs: OutputPaths {
                    trajectory: a.input,
                    model: a.out,
                    ..OutputPaths::default()
                },
                ..RunSpec::default()
            };
            let spec = with_file(&a.spec, flags)?;
            let fit = Fit::from_spec(&spec)?;
            let input = required(spec.outputs.trajectory, "--in")?;
            commands::cmd_fit(&input, &fit, spec.outputs.model.as_deref())
        }
        Command::Reconstruct(a) => {
            let flags = RunSpec {
                outputs: OutputPaths {
                    trajectory: a.input,
                    model: a.model,
                    reconstruction: a.out,
                    metrics: a.metrics,
                },
                ..RunSpec::default()
            };
            let out = with_file(&a.spec, flags)?.outputs;
            let model = required(out.model, "--model")?;
            let input = required(out.trajectory, "--in")?;
            commands::cmd_reconstruct(
                &model,
                &input,
                out.reconstruction.as_deref(),
                out.metrics.as_deref(),
            )
        }
        Command::Eigen(a) => commands::cmd_eigen(&a.input, a.basis, a.top, a.json.as_deref()),
        Command::Repro(a) => {
            if !(a.dt.is_finite() && a.dt > 0.0) || a.steps == 0 {
                return Err(CliError::usage("--dt must be positive and --steps at least 1"));
            }
            let summary = repro::run_sweep(&a.out_dir, a.dt, a.steps)?;
            let failed = summary.cells.iter().filter(|c| c.error.is_some()).count();
            print!("{}", repro::summary_markdown(&summary));
            println!(
                "\n{} cells, {failed} failed; outputs in {}",
                summary.cells.len(),
                a.out_dir.display()
            );
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::usage(first));
            return EXIT_USAGE;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.code
        }
    }
}
