//! Discrete-time environments `x⁺ = F(x, u)`, linearization and rollouts.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::costs::RunningCost;
use crate::error::{Error, Result};
use crate::math::{norm2, wrap_angle};

/// Relative slack allowed on the input bound before a step is rejected.
const INPUT_BOUND_SLACK: f64 = 1e-12;

/// Pendulum parameters. `θ = 0` is the upright equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// Bob mass (kg).
    pub m: f64,
    /// Rod length (m).
    pub l: f64,
    /// Gravity (m/s²).
    pub g: f64,
    /// Viscous damping (N·m·s).
    pub b: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            m: 1.0,
            l: 1.0,
            g: 9.81,
            b: 0.1,
        }
    }
}

/// Cart-pole parameters with a point-mass pole. `α = 0` is upright.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartpoleParams {
    /// Cart mass (kg).
    pub cart_mass: f64,
    /// Pole tip mass (kg).
    pub pole_mass: f64,
    /// Pole length (m).
    pub pole_length: f64,
    /// Gravity (m/s²).
    pub g: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        CartpoleParams {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 0.6,
            g: 9.81,
        }
    }
}

/// The transition model behind an [`Environment`].
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// `x = (p, v)`, `p⁺ = p + dt·v`, `v⁺ = v + dt·u`.
    DoubleIntegrator,
    /// `x = (θ, θ̇)` under explicit Euler.
    Pendulum(PendulumParams),
    /// `x = (p, α, ṗ, α̇)` under explicit Euler.
    Cartpole(CartpoleParams),
    /// `x⁺ = A x + B u`.
    Linear {
        /// State matrix.
        a: DMatrix<f64>,
        /// Input matrix.
        b: DMatrix<f64>,
    },
}

/// A deterministic discrete-time control system with box constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    /// Short identifier used in reports.
    pub name: &'static str,
    /// Time step (s).
    pub dt: f64,
    /// Per-dimension `[lo, hi]` of the state region of interest.
    pub state_box: Vec<(f64, f64)>,
    /// Per-dimension `[−H, H]` of admissible inputs.
    pub input_box: Vec<(f64, f64)>,
    /// Dimensions holding angles, wrapped to `[−π, π)`.
    pub wrap_dims: Vec<usize>,
    /// Transition model.
    pub model: Model,
}

/// Jacobians of `F` at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    /// `∂F/∂x` at `(0, 0)`.
    pub a: DMatrix<f64>,
    /// `∂F/∂u` at `(0, 0)`.
    pub b: DMatrix<f64>,
}

/// Builds the double integrator. Inputs are unbounded until
/// [`Environment::with_input_bound`] is applied.
pub fn make_double_integrator(dt: f64) -> Result<Environment> {
    check_dt(dt)?;
    Ok(Environment {
        name: "double_integrator",
        dt,
        state_box: vec![(-2.0, 2.0), (-2.0, 2.0)],
        input_box: vec![(f64::NEG_INFINITY, f64::INFINITY)],
        wrap_dims: Vec::new(),
        model: Model::DoubleIntegrator,
    })
}

/// Builds the torque-limited pendulum with `|u| ≤ input_bound`.
pub fn make_pendulum(dt: f64, input_bound: f64, params: PendulumParams) -> Result<Environment> {
    check_dt(dt)?;
    check_bound(input_bound)?;
    let PendulumParams { m, l, g, b } = params;
    if !(m > 0.0 && l > 0.0 && g > 0.0 && b >= 0.0) {
        return Err(Error::InvalidArgument(
            "pendulum needs m, l, g > 0 and b >= 0".into(),
        ));
    }
    Ok(Environment {
        name: "pendulum",
        dt,
        state_box: vec![(-core::f64::consts::PI, core::f64::consts::PI), (-8.0, 8.0)],
        input_box: vec![(-input_bound, input_bound)],
        wrap_dims: vec![0],
        model: Model::Pendulum(params),
    })
}

/// Builds the force-limited cart-pole with `|u| ≤ input_bound`.
pub fn make_cartpole(dt: f64, input_bound: f64, params: CartpoleParams) -> Result<Environment> {
    check_dt(dt)?;
    check_bound(input_bound)?;
    let CartpoleParams {
        cart_mass,
        pole_mass,
        pole_length,
        g,
    } = params;
    if !(cart_mass > 0.0 && pole_mass > 0.0 && pole_length > 0.0 && g > 0.0) {
        return Err(Error::InvalidArgument(
            "cart-pole parameters must be positive".into(),
        ));
    }
    let pi = core::f64::consts::PI;
    Ok(Environment {
        name: "cartpole",
        dt,
        state_box: vec![(-1.0, 1.0), (-pi, pi), (-3.0, 3.0), (-8.0, 8.0)],
        input_box: vec![(-input_bound, input_bound)],
        wrap_dims: vec![1],
        model: Model::Cartpole(params),
    })
}

/// Builds `x⁺ = A x + B u` with the given boxes.
pub fn make_linear(
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    dt: f64,
    state_box: Vec<(f64, f64)>,
    input_box: Vec<(f64, f64)>,
) -> Result<Environment> {
    check_dt(dt)?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if b.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.nrows(),
        });
    }
    if state_box.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: state_box.len(),
        });
    }
    if input_box.len() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: b.ncols(),
            got: input_box.len(),
        });
    }
    Ok(Environment {
        name: "linear",
        dt,
        state_box,
        input_box,
        wrap_dims: Vec::new(),
        model: Model::Linear { a, b },
    })
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "dt must be positive and finite".into(),
        ))
    }
}

fn check_bound(h: f64) -> Result<()> {
    if h > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "input bound must be positive".into(),
        ))
    }
}

impl Environment {
    /// Number of state components.
    pub fn state_dim(&self) -> usize {
        self.state_box.len()
    }

    /// Number of input components.
    pub fn input_dim(&self) -> usize {
        self.input_box.len()
    }

    /// Replaces the input box by `[−h, h]` in every input dimension.
    pub fn with_input_bound(mut self, h: f64) -> Result<Self> {
        check_bound(h)?;
        for b in &mut self.input_box {
            *b = (-h, h);
        }
        Ok(self)
    }

    /// Replaces the state box.
    pub fn with_state_box(mut self, state_box: Vec<(f64, f64)>) -> Result<Self> {
        if state_box.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim(),
                got: state_box.len(),
            });
        }
        self.state_box = state_box;
        Ok(self)
    }

    /// Whether dimension `d` is an angle.
    pub fn is_wrapped(&self, d: usize) -> bool {
        self.wrap_dims.contains(&d)
    }

    /// Checks `u` against the input box.
    pub fn check_input(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: u.len(),
            });
        }
        for (d, (&ui, &(lo, hi))) in u.iter().zip(&self.input_box).enumerate() {
            let slack = INPUT_BOUND_SLACK * (1.0 + hi.abs().max(lo.abs()));
            if !(ui >= lo - slack && ui <= hi + slack) {
                return Err(Error::InputOutOfBounds {
                    dim: d,
                    value: ui,
                    bound: hi,
                });
            }
        }
        Ok(())
    }

    /// One transition `F(x, u)`; rejects inputs outside the input box.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.state_dim()];
        self.step_into(x, u, &mut out)?;
        Ok(out)
    }

    /// [`Environment::step`] writing into a caller buffer.
    pub fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim(),
                got: x.len(),
            });
        }
        self.check_input(u)?;
        self.step_unchecked(x, u, out);
        Ok(())
    }

    /// `F(x, u)` without dimension or bound checks.
    pub fn step_unchecked(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let dt = self.dt;
        match &self.model {
            Model::DoubleIntegrator => {
                out[0] = x[0] + dt * x[1];
                out[1] = x[1] + dt * u[0];
            }
            Model::Pendulum(p) => {
                let ml2 = p.m * p.l * p.l;
                let acc = (p.g / p.l) * libm::sin(x[0]) - (p.b / ml2) * x[1] + u[0] / ml2;
                out[0] = wrap_angle(x[0] + dt * x[1]);
                out[1] = x[1] + dt * acc;
            }
            Model::Cartpole(c) => {
                let (p_dd, a_dd) = cartpole_accelerations(c, x[1], x[3], u[0]);
                out[0] = x[0] + dt * x[2];
                out[1] = wrap_angle(x[1] + dt * x[3]);
                out[2] = x[2] + dt * p_dd;
                out[3] = x[3] + dt * a_dd;
            }
            Model::Linear { a, b } => {
                let n = a.nrows();
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += a[(i, j)] * x[j];
                    }
                    for (j, uj) in u.iter().enumerate() {
                        acc += b[(i, j)] * uj;
                    }
                    out[i] = acc;
                }
            }
        }
    }

    /// Splits `F(x, u) = f₀ + G u` for these control-affine models.
    ///
    /// Returns `f₀ = F(x, 0)` and `G` stored column-major (`G[j·n + i]`).
    /// Inputs never feed the wrapped coordinates directly, so the split is
    /// exact up to rounding.
    pub fn affine_split(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.state_dim();
        let m = self.input_dim();
        let mut f0 = vec![0.0; n];
        let zero = vec![0.0; m];
        self.step_unchecked(x, &zero, &mut f0);
        let mut g = vec![0.0; n * m];
        let mut e = zero;
        let mut fe = vec![0.0; n];
        for j in 0..m {
            e[j] = 1.0;
            self.step_unchecked(x, &e, &mut fe);
            e[j] = 0.0;
            for i in 0..n {
                g[j * n + i] = if self.is_wrapped(i) {
                    0.0
                } else {
                    fe[i] - f0[i]
                };
            }
        }
        (f0, g)
    }

    /// Whether `x` lies inside the state box. Wrapped dimensions always do.
    pub fn in_state_box(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(d, &v)| {
            let (lo, hi) = self.state_box[d];
            self.is_wrapped(d) || (v >= lo && v <= hi)
        })
    }
}

/// Cart and pole accelerations from the 2×2 mass-matrix system.
fn cartpole_accelerations(
    c: &CartpoleParams,
    alpha: f64,
    alpha_dot: f64,
    force: f64,
) -> (f64, f64) {
    let (mc, mp, l, g) = (c.cart_mass, c.pole_mass, c.pole_length, c.g);
    let (s, co) = (libm::sin(alpha), libm::cos(alpha));
    let m11 = mc + mp;
    let m12 = mp * l * co;
    let m22 = mp * l * l;
    let r1 = force + mp * l * alpha_dot * alpha_dot * s;
    let r2 = mp * g * l * s;
    let det = m11 * m22 - m12 * m12;
    ((m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det)
}

/// Jacobians at the origin: exact for linear models, central differences
/// with `h = 10⁻⁵` otherwise.
pub fn linearize(env: &Environment) -> Linearization {
    match &env.model {
        Model::DoubleIntegrator => Linearization {
            a: DMatrix::from_row_slice(2, 2, &[1.0, env.dt, 0.0, 1.0]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, env.dt]),
        },
        Model::Linear { a, b } => Linearization {
            a: a.clone(),
            b: b.clone(),
        },
        _ => linearize_fd(env, 1e-5),
    }
}

/// Central finite-difference Jacobians at the origin with step `h`.
pub fn linearize_fd(env: &Environment, h: f64) -> Linearization {
    let n = env.state_dim();
    let m = env.input_dim();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let mut x = vec![0.0; n];
    let mut u = vec![0.0; m];
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..n {
        x[j] = h;
        env.step_unchecked(&x, &u, &mut fp);
        x[j] = -h;
        env.step_unchecked(&x, &u, &mut fm);
        x[j] = 0.0;
        for i in 0..n {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    for j in 0..m {
        u[j] = h;
        env.step_unchecked(&x, &u, &mut fp);
        u[j] = -h;
        env.step_unchecked(&x, &u, &mut fm);
        u[j] = 0.0;
        for i in 0..n {
            b[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Linearization { a, b }
}

/// A state-feedback law `u = π(x)`.
pub trait Controller {
    /// Writes `π(x)` into `u`.
    fn input(&self, x: &[f64], u: &mut [f64]);
}

impl<F: Fn(&[f64], &mut [f64])> Controller for F {
    fn input(&self, x: &[f64], u: &mut [f64]) {
        self(x, u)
    }
}

/// `u = 0` everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroInput;

impl Controller for ZeroInput {
    fn input(&self, _x: &[f64], u: &mut [f64]) {
        u.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// `u = sat(−K x)`, saturated to an optional input box.
#[derive(Debug, Clone)]
pub struct LinearFeedback {
    /// Gain, `input_dim × state_dim`.
    pub k: DMatrix<f64>,
    /// Saturation box; `None` leaves the input unclipped.
    pub saturation: Option<Vec<(f64, f64)>>,
}

impl LinearFeedback {
    /// Unsaturated feedback `u = −K x`.
    pub fn new(k: DMatrix<f64>) -> Self {
        LinearFeedback {
            k,
            saturation: None,
        }
    }

    /// Clips the feedback to the environment's input box.
    pub fn saturated(mut self, env: &Environment) -> Self {
        self.saturation = Some(env.input_box.clone());
        self
    }
}

impl Controller for LinearFeedback {
    fn input(&self, x: &[f64], u: &mut [f64]) {
        for (i, ui) in u.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, xj) in x.iter().enumerate() {
                acc -= self.k[(i, j)] * xj;
            }
            if let Some(sat) = &self.saturation {
                acc = acc.clamp(sat[i].0, sat[i].1);
            }
            *ui = acc;
        }
    }
}

/// A closed-loop trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    /// `x₀ … x_T`.
    pub states: Vec<Vec<f64>>,
    /// `u₀ … u_{T−1}`.
    pub inputs: Vec<Vec<f64>>,
    /// `ℓ(x_k, u_k)` when a running cost was attached, else empty.
    pub running_costs: Vec<f64>,
    /// `T`.
    pub horizon_steps: usize,
    /// First index of a state outside the state box, if any.
    pub escaped_at: Option<usize>,
}

impl RolloutTrace {
    /// Whether any state left the state box.
    pub fn escaped(&self) -> bool {
        self.escaped_at.is_some()
    }

    /// Last state of the trace.
    pub fn final_state(&self) -> &[f64] {
        &self.states[self.horizon_steps]
    }

    /// Euclidean norms of the states.
    pub fn state_norms(&self) -> Vec<f64> {
        self.states.iter().map(|x| norm2(x)).collect()
    }
}

/// Simulates `horizon_steps` transitions from `x0` under `policy`.
pub fn rollout<C: Controller + ?Sized>(
    env: &Environment,
    policy: &C,
    x0: &[f64],
    horizon_steps: usize,
    cost: Option<&RunningCost>,
) -> Result<RolloutTrace> {
    if x0.len() != env.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: env.state_dim(),
            got: x0.len(),
        });
    }
    if !env.in_state_box(x0) {
        return Err(Error::InvalidArgument(
            "initial state outside the state box".into(),
        ));
    }
    let mut x0w = x0.to_vec();
    for &d in &env.wrap_dims {
        x0w[d] = wrap_angle(x0w[d]);
    }
    let mut states = Vec::with_capacity(horizon_steps + 1);
    let mut inputs = Vec::with_capacity(horizon_steps);
    let mut running_costs = Vec::with_capacity(if cost.is_some() { horizon_steps } else { 0 });
    states.push(x0w);
    let mut escaped_at = None;
    for k in 0..horizon_steps {
        let mut u = vec![0.0; env.input_dim()];
        policy.input(&states[k], &mut u);
        let next = env.step(&states[k], &u)?;
        if let Some(c) = cost {
            running_costs.push(c.eval(&states[k], &u));
        }
        if escaped_at.is_none() && !env.in_state_box(&next) {
            escaped_at = Some(k + 1);
        }
        inputs.push(u);
        states.push(next);
    }
    Ok(RolloutTrace {
        states,
        inputs,
        running_costs,
        horizon_steps,
        escaped_at,
    })
}
