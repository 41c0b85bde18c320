//! `RunSpec`: everything one simulate/fit/reconstruct run needs, loadable
//! from JSON and overridable from flags.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use koopman_core::dynamics::{CartPoleParams, PendulumParams};
use koopman_core::{
    linearize, lqr_gain, BasisSpec, LqrController, LqrWeights, RankPolicy, System, SystemKind,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_STEPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    #[default]
    None,
    Lqr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Dmd,
    Edmd,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub trajectory: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub reconstruction: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub system: Option<SystemKind>,
    /// Parameter overrides by field name, e.g. `{"length": 1.5}`.
    pub params: BTreeMap<String, f64>,
    pub x0: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub control: Option<ControlMode>,
    pub q: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
    pub x_ref: Option<Vec<f64>>,
    pub method: Option<Method>,
    /// `poly:2`, `fourier:1`, `states`.
    pub basis: Option<String>,
    /// `auto` or a positive integer.
    pub rank: Option<String>,
    pub outputs: OutputPaths,
}

impl RunSpec {
    pub fn load(path: &Path) -> CliResult<RunSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: invalid run spec: {e}", path.display())))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: RunSpec) -> RunSpec {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(system, x0, dt, steps, control, q, r, x_ref, method, basis, rank);
        self.params.extend(other.params);
        let o = other.outputs;
        if o.trajectory.is_some() {
            self.outputs.trajectory = o.trajectory;
        }
        if o.model.is_some() {
            self.outputs.model = o.model;
        }
        if o.reconstruction.is_some() {
            self.outputs.reconstruction = o.reconstruction;
        }
        if o.metrics.is_some() {
            self.outputs.metrics = o.metrics;
        }
        self
    }
}

/// Initial state used in the reference scenarios.
pub fn default_x0(kind: SystemKind) -> Vec<f64> {
    match kind {
        SystemKind::Pendulum => vec![FRAC_PI_4, 0.0],
        SystemKind::CartPole => vec![-1.0, 0.0, PI, 0.0],
    }
}

pub fn default_q(kind: SystemKind) -> Vec<f64> {
    match kind {
        SystemKind::Pendulum => vec![0.0, 10.0],
        SystemKind::CartPole => vec![5.0, 10.0, 0.0, 0.0],
    }
}

pub fn default_x_ref(kind: SystemKind) -> Vec<f64> {
    match kind {
        SystemKind::Pendulum => vec![0.0, 0.0],
        SystemKind::CartPole => vec![1.0, 0.0, PI, 0.0],
    }
}

/// A validated simulation setup.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub system: System,
    pub x0: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub controller: Option<LqrController>,
}

fn check_len(what: &str, v: &[f64], n: usize, kind: SystemKind) -> CliResult<()> {
    if v.len() != n {
        return Err(CliError::usage(format!(
            "{what} has {} entries, {kind} has {n} states",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::usage(format!("{what} must be finite")));
    }
    Ok(())
}

fn apply_params(kind: SystemKind, params: &BTreeMap<String, f64>) -> CliResult<System> {
    let unknown = |name: &str, known: &[&str]| {
        CliError::usage(format!(
            "unknown {kind} parameter `{name}`; supported: {}",
            known.join(", ")
        ))
    };
    let system = match kind {
        SystemKind::Pendulum => {
            let mut p = PendulumParams::default();
            for (name, &v) in params {
                match name.as_str() {
                    "mass" => p.mass = v,
                    "length" => p.length = v,
                    "gravity" => p.gravity = v,
                    _ => return Err(unknown(name, &["mass", "length", "gravity"])),
                }
            }
            System::Pendulum(p)
        }
        SystemKind::CartPole => {
            let mut p = CartPoleParams::default();
            for (name, &v) in params {
                match name.as_str() {
                    "pole_mass" => p.pole_mass = v,
                    "cart_mass" => p.cart_mass = v,
                    "length" => p.length = v,
                    "gravity" => p.gravity = v,
                    _ => {
                        return Err(unknown(name, &["pole_mass", "cart_mass", "length", "gravity"]))
                    }
                }
            }
            System::CartPole(p)
        }
    };
    system.validate()?;
    Ok(system)
}

impl Simulation {
    /// Validates every simulation field before any integration happens.
    pub fn from_spec(spec: &RunSpec) -> CliResult<Simulation> {
        let kind = spec
            .system
            .ok_or_else(|| CliError::usage("missing --system (pendulum or cartpole)"))?;
        let system = apply_params(kind, &spec.params)?;
        let n = kind.dim();
        let x0 = spec.x0.clone().unwrap_or_else(|| default_x0(kind));
        check_len("x0", &x0, n, kind)?;
        let dt = spec.dt.unwrap_or(DEFAULT_DT);
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CliError::usage(format!("dt must be positive, got {dt}")));
        }
        let steps = spec.steps.unwrap_or(DEFAULT_STEPS);
        if steps == 0 {
            return Err(CliError::usage("steps must be at least 1"));
        }
        let control = spec.control.unwrap_or_default();
        let has_lqr_flags = spec.q.is_some() || spec.r.is_some() || spec.x_ref.is_some();
        let controller = match control {
            ControlMode::None if has_lqr_flags => {
                return Err(CliError::usage("--q/--r/--xref need --control lqr"))
            }
            ControlMode::None => None,
            ControlMode::Lqr => {
                let q = spec.q.clone().unwrap_or_else(|| default_q(kind));
                check_len("q", &q, n, kind)?;
                let r = spec.r.clone().unwrap_or_else(|| vec![1.0]);
                if r.len() != 1 {
                    return Err(CliError::usage(format!(
                        "r has {} entries, the plant has 1 input",
                        r.len()
                    )));
                }
                let x_ref = spec.x_ref.clone().unwrap_or_else(|| default_x_ref(kind));
                check_len("x_ref", &x_ref, n, kind)?;
                let weights = LqrWeights::diagonal(&q, &r)?;
                let model = linearize(&system, &x_ref)?;
                Some(lqr_gain(&model, &weights, &x_ref)?)
            }
        };
        Ok(Simulation {
            system,
            x0,
            dt,
            steps,
            controller,
        })
    }
}

/// A validated fit setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub method: Method,
    pub basis: Option<BasisSpec>,
    pub rank: RankPolicy,
}

impl Fit {
    pub fn from_spec(spec: &RunSpec) -> CliResult<Fit> {
        let method = spec.method.unwrap_or_default();
        let basis = spec
            .basis
            .as_deref()
            .map(BasisSpec::from_str)
            .transpose()?;
        let rank = spec
            .rank
            .as_deref()
            .map(RankPolicy::from_str)
            .transpose()?
            .unwrap_or_default();
        match (method, basis) {
            (Method::Dmd, Some(_)) => Err(CliError::usage("--basis only applies to --method edmd")),
            (Method::Edmd, None) => Err(CliError::usage(
                "--method edmd needs --basis (e.g. poly:2, fourier:1, states)",
            )),
            _ => Ok(Fit { method, basis, rank }),
        }
    }
}
