//! Benchmark plants and a fixed-step RK4 integrator.
//!
//! Angles are never wrapped. The pendulum angle is measured from upright;
//! the cart-pole pole hangs at θ = 0 and balances upright at θ = π.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity used by the default parameter sets, m/s².
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Any state entry larger than this in magnitude aborts a simulation.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// `(sin θ, cos θ)` evaluated after reducing θ by the nearest multiple of
/// the floating-point π, so that θ = kπ gives an exactly zero sine and the
/// equilibria of both plants are exact fixed points.
pub fn sin_cos_reduced(theta: f64) -> (f64, f64) {
    let k = (theta / PI).round();
    let r = theta - k * PI;
    let (s, c) = r.sin_cos();
    if (k as i64) % 2 == 0 {
        (s, c)
    } else {
        (-s, -c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    /// Bob mass, kg.
    pub mass: f64,
    /// Arm length, m.
    pub length: f64,
    /// Gravity, m/s².
    pub gravity: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            mass: 1.0,
            length: 2.0,
            gravity: STANDARD_GRAVITY,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        positive("pendulum mass", self.mass)?;
        positive("pendulum length", self.length)?;
        positive("gravity", self.gravity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    /// Pole (end) mass, kg.
    pub pole_mass: f64,
    /// Cart mass, kg.
    pub cart_mass: f64,
    /// Arm length, m.
    pub length: f64,
    /// Gravity, m/s².
    pub gravity: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            pole_mass: 1.0,
            cart_mass: 5.0,
            length: 2.0,
            gravity: STANDARD_GRAVITY,
        }
    }
}

impl CartPoleParams {
    pub fn validate(&self) -> Result<()> {
        positive("pole mass", self.pole_mass)?;
        positive("cart mass", self.cart_mass)?;
        positive("arm length", self.length)?;
        positive("gravity", self.gravity)
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} must be positive, got {v}")))
    }
}

fn check_state(state: &[f64], n: usize, u: f64) -> Result<()> {
    if state.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected state of length {n}, got {}",
            state.len()
        )));
    }
    if state.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("state"));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("input"));
    }
    Ok(())
}

/// `[θ̇, (g/L) sin θ + u/(mL²)]`, θ = 0 upright, `u` a torque.
pub fn pendulum_deriv(state: &[f64], u: f64, params: &PendulumParams) -> Result<DVector<f64>> {
    check_state(state, 2, u)?;
    Ok(pendulum_field(state, u, params))
}

fn pendulum_field(state: &[f64], u: f64, p: &PendulumParams) -> DVector<f64> {
    let (s, _) = sin_cos_reduced(state[0]);
    let l = p.length;
    DVector::from_vec(vec![
        state[1],
        p.gravity / l * s + u / (p.mass * l * l),
    ])
}

/// `[ẋ, ẍ, θ̇, θ̈]` for the frictionless cart-pole driven by a cart force `u`,
/// θ = π upright.
pub fn cartpole_deriv(state: &[f64], u: f64, params: &CartPoleParams) -> Result<DVector<f64>> {
    check_state(state, 4, u)?;
    Ok(cartpole_field(state, u, params))
}

/// Gravity as it enters the cart-pole equations. They are written for a
/// negative `g`; with `+g` the pole would rest at θ = π instead of balancing.
pub(crate) fn cartpole_gravity(p: &CartPoleParams) -> f64 {
    -p.gravity
}

fn cartpole_field(state: &[f64], u: f64, p: &CartPoleParams) -> DVector<f64> {
    let (m, big_m, l, g) = (p.pole_mass, p.cart_mass, p.length, cartpole_gravity(p));
    let (x_dot, theta, theta_dot) = (state[1], state[2], state[3]);
    let (s, c) = sin_cos_reduced(theta);
    let d = m * l * l * (big_m + m * s * s);
    let swing = m * l * theta_dot * theta_dot * s;
    let x_ddot = (-m * m * l * l * g * c * s + m * l * l * swing + m * l * l * u) / d;
    let theta_ddot = ((m + big_m) * m * g * l * s - m * l * c * swing - m * l * c * u) / d;
    DVector::from_vec(vec![x_dot, x_ddot, theta_dot, theta_ddot])
}

/// One classical Runge–Kutta step with the input held over the step.
pub fn rk4_step<F>(deriv: F, state: &DVector<f64>, u: f64, dt: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>, f64) -> DVector<f64>,
{
    let half = 0.5 * dt;
    let k1 = deriv(state, u);
    let k2 = deriv(&(state + &k1 * half), u);
    let k3 = deriv(&(state + &k2 * half), u);
    let k4 = deriv(&(state + &k3 * dt), u);
    state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Pendulum,
    CartPole,
}

impl SystemKind {
    pub fn state_names(self) -> &'static [&'static str] {
        match self {
            SystemKind::Pendulum => &["theta", "theta_dot"],
            SystemKind::CartPole => &["x", "x_dot", "theta", "theta_dot"],
        }
    }

    pub fn dim(self) -> usize {
        self.state_names().len()
    }

    /// Identifies a system from a list of state column names.
    pub fn from_state_names<S: AsRef<str>>(names: &[S]) -> Option<SystemKind> {
        [SystemKind::Pendulum, SystemKind::CartPole]
            .into_iter()
            .find(|k| {
                k.state_names().len() == names.len()
                    && k.state_names().iter().zip(names).all(|(a, b)| *a == b.as_ref())
            })
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Pendulum => "pendulum",
            SystemKind::CartPole => "cartpole",
        })
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pendulum" => Ok(SystemKind::Pendulum),
            "cartpole" | "cart-pole" => Ok(SystemKind::CartPole),
            other => Err(Error::InvalidArgument(format!(
                "unknown system `{other}` (expected pendulum or cartpole)"
            ))),
        }
    }
}

/// A benchmark plant with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum System {
    Pendulum(PendulumParams),
    CartPole(CartPoleParams),
}

impl System {
    pub fn default_for(kind: SystemKind) -> System {
        match kind {
            SystemKind::Pendulum => System::Pendulum(PendulumParams::default()),
            SystemKind::CartPole => System::CartPole(CartPoleParams::default()),
        }
    }

    pub fn kind(&self) -> SystemKind {
        match self {
            System::Pendulum(_) => SystemKind::Pendulum,
            System::CartPole(_) => SystemKind::CartPole,
        }
    }

    pub fn dim(&self) -> usize {
        self.kind().dim()
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            System::Pendulum(p) => p.validate(),
            System::CartPole(p) => p.validate(),
        }
    }

    /// State derivative, checking dimensions and finiteness.
    pub fn deriv(&self, state: &[f64], u: f64) -> Result<DVector<f64>> {
        match self {
            System::Pendulum(p) => pendulum_deriv(state, u, p),
            System::CartPole(p) => cartpole_deriv(state, u, p),
        }
    }

    /// Unchecked state derivative used inside the integrator.
    pub fn field(&self, state: &DVector<f64>, u: f64) -> DVector<f64> {
        match self {
            System::Pendulum(p) => pendulum_field(state.as_slice(), u, p),
            System::CartPole(p) => cartpole_field(state.as_slice(), u, p),
        }
    }
}

/// A state-feedback law evaluated once per integration step.
pub trait FeedbackLaw {
    fn control(&self, state: &DVector<f64>) -> f64;
}

impl<F: Fn(&DVector<f64>) -> f64> FeedbackLaw for F {
    fn control(&self, state: &DVector<f64>) -> f64 {
        self(state)
    }
}

/// Uniformly sampled states (and optionally inputs); sample `k` is at `k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    states: DMatrix<f64>,
    inputs: Option<DMatrix<f64>>,
    state_names: Vec<String>,
    input_names: Vec<String>,
}

impl Trajectory {
    /// `states` is n×m with one sample per column; `inputs`, when present,
    /// is l×m.
    pub fn new(
        dt: f64,
        states: DMatrix<f64>,
        inputs: Option<DMatrix<f64>>,
        state_names: Vec<String>,
        input_names: Vec<String>,
    ) -> Result<Trajectory> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if states.ncols() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a trajectory needs at least 2 samples, got {}",
                states.ncols()
            )));
        }
        if states.nrows() == 0 {
            return Err(Error::InvalidArgument("trajectory has no state rows".into()));
        }
        if state_names.len() != states.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} state names for {} state rows",
                state_names.len(),
                states.nrows()
            )));
        }
        if states.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("trajectory states"));
        }
        match &inputs {
            Some(u) => {
                if u.ncols() != states.ncols() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} input samples for {} state samples",
                        u.ncols(),
                        states.ncols()
                    )));
                }
                if input_names.len() != u.nrows() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} input names for {} input rows",
                        input_names.len(),
                        u.nrows()
                    )));
                }
                if u.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("trajectory inputs"));
                }
            }
            None if !input_names.is_empty() => {
                return Err(Error::DimensionMismatch("input names given without inputs".into()))
            }
            None => {}
        }
        Ok(Trajectory {
            dt,
            states,
            inputs,
            state_names,
            input_names,
        })
    }

    /// Trajectory with generic state names `x1..xn` and no inputs.
    pub fn from_states(dt: f64, states: DMatrix<f64>) -> Result<Trajectory> {
        let names = (1..=states.nrows()).map(|i| format!("x{i}")).collect();
        Trajectory::new(dt, states, None, names, Vec::new())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// n×m, one column per sample.
    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn inputs(&self) -> Option<&DMatrix<f64>> {
        self.inputs.as_ref()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn input_names(&self) -> &[String] {
        &self.input_names
    }

    pub fn dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.column(k).into_owned()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn last_state(&self) -> DVector<f64> {
        self.state(self.len() - 1)
    }
}

/// Integrates `system` from `x0` for `steps` RK4 steps.
///
/// The returned trajectory has `steps + 1` states and one recorded input per
/// state: the feedback law evaluated at that state, or zero without one.
pub fn simulate(
    system: &System,
    x0: &[f64],
    dt: f64,
    steps: usize,
    controller: Option<&dyn FeedbackLaw>,
) -> Result<Trajectory> {
    system.validate()?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    check_state(x0, system.dim(), 0.0)?;

    let n = system.dim();
    let mut states = DMatrix::zeros(n, steps + 1);
    let mut inputs = DMatrix::zeros(1, steps + 1);
    let mut x = DVector::from_column_slice(x0);
    let law = |x: &DVector<f64>| controller.map_or(0.0, |c| c.control(x));

    for k in 0..steps {
        let u = law(&x);
        if !u.is_finite() {
            return Err(Error::Diverged {
                step: k,
                limit: DIVERGENCE_LIMIT,
            });
        }
        states.set_column(k, &x);
        inputs[(0, k)] = u;
        x = rk4_step(|s, u| system.field(s, u), &x, u, dt);
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(Error::Diverged {
                step: k + 1,
                limit: DIVERGENCE_LIMIT,
            });
        }
    }
    states.set_column(steps, &x);
    inputs[(0, steps)] = law(&x);

    Trajectory::new(
        dt,
        states,
        Some(inputs),
        system.kind().state_names().iter().map(|s| s.to_string()).collect(),
        vec!["u".to_string()],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn pendulum_equilibria_and_quarter_turn() {
        let p = PendulumParams::default();
        assert_eq!(pendulum_deriv(&[0.0, 0.0], 0.0, &p).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(pendulum_deriv(&[PI, 0.0], 0.0, &p).unwrap().as_slice(), &[0.0, 0.0]);
        let d = pendulum_deriv(&[PI / 2.0, 0.0], 0.0, &p).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 4.905).abs() < TOL);
    }

    #[test]
    fn cartpole_equilibria_and_unit_force() {
        let p = CartPoleParams::default();
        let zero = [0.0; 4];
        assert_eq!(cartpole_deriv(&[0.0, 0.0, PI, 0.0], 0.0, &p).unwrap().as_slice(), &zero);
        assert_eq!(cartpole_deriv(&[0.0; 4], 0.0, &p).unwrap().as_slice(), &zero);
        let d = cartpole_deriv(&[0.0, 0.0, PI, 0.0], 1.0, &p).unwrap();
        let expected = [0.0, 0.2, 0.0, 0.1];
        for (a, b) in d.iter().zip(expected) {
            assert!((a - b).abs() < TOL, "{d:?}");
        }
    }

    #[test]
    fn derivative_rejects_bad_input() {
        let p = PendulumParams::default();
        assert!(matches!(
            pendulum_deriv(&[f64::NAN, 0.0], 0.0, &p),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            pendulum_deriv(&[0.0, 0.0], f64::INFINITY, &p),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            cartpole_deriv(&[0.0; 3], 0.0, &CartPoleParams::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn rk4_zero_field_and_exponential() {
        let s = DVector::from_vec(vec![1.5, -2.0]);
        let out = rk4_step(|x, _| DVector::zeros(x.len()), &s, 0.0, 0.1);
        assert_eq!(out, s);

        let one = DVector::from_vec(vec![1.0]);
        let out = rk4_step(|x, _| x.clone(), &one, 0.0, 0.1);
        assert!((out[0] - 1.10517083).abs() < 1e-7);
    }

    #[test]
    fn reduced_trig_matches_std() {
        for i in -200..200 {
            let th = i as f64 * 0.0731;
            let (s, c) = sin_cos_reduced(th);
            assert!((s - th.sin()).abs() < 1e-14);
            assert!((c - th.cos()).abs() < 1e-14);
        }
        assert_eq!(sin_cos_reduced(PI).0, 0.0);
        assert_eq!(sin_cos_reduced(-3.0 * PI).0, 0.0);
    }

    #[test]
    fn simulate_records_inputs_and_shape() {
        let sys = System::default_for(SystemKind::Pendulum);
        let traj = simulate(&sys, &[0.0, 0.0], 0.01, 100, None).unwrap();
        assert_eq!(traj.len(), 101);
        assert!(traj.states().iter().all(|&v| v == 0.0));
        assert!(traj.inputs().unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(traj.state_names(), ["theta", "theta_dot"]);
    }

    #[test]
    fn simulate_reports_divergence_step() {
        let sys = System::default_for(SystemKind::Pendulum);
        let push = |_: &DVector<f64>| 1e12;
        let err = simulate(&sys, &[0.0, 0.0], 0.01, 100, Some(&push)).unwrap_err();
        match err {
            Error::Diverged { step, .. } => assert!((1..=100).contains(&step)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn simulate_validates_arguments() {
        let sys = System::default_for(SystemKind::CartPole);
        assert!(simulate(&sys, &[0.0, 0.0], 0.01, 10, None).is_err());
        assert!(simulate(&sys, &[0.0; 4], 0.01, 0, None).is_err());
        assert!(simulate(&sys, &[0.0; 4], -0.01, 10, None).is_err());
        let bad = System::Pendulum(PendulumParams {
            mass: 0.0,
            ..Default::default()
        });
        assert!(simulate(&bad, &[0.0; 2], 0.01, 10, None).is_err());
    }

    #[test]
    fn system_kind_from_names() {
        assert_eq!(
            SystemKind::from_state_names(&["theta", "theta_dot"]),
            Some(SystemKind::Pendulum)
        );
        assert_eq!(SystemKind::from_state_names(&["x1", "x2"]), None);
        assert_eq!("cartpole".parse::<SystemKind>().unwrap(), SystemKind::CartPole);
        assert!("acrobot".parse::<SystemKind>().is_err());
    }
}
