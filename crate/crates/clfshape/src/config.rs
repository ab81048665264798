//! Experiment configuration, read from JSON.
//!
//! Every field has a default, so `{}` is a valid config describing the
//! pendulum discount sweep. Fields whose natural default depends on the
//! environment (grid, input count, bounds, weights, initial-condition box)
//! are optional and resolved against the selected environment.

use std::f64::consts::PI;
use std::path::Path;

use clfshape_core::analysis::RolloutProtocol;
use clfshape_core::costs::{CostKind, RunningCost};
use clfshape_core::dynamics::{
    make_cartpole, make_double_integrator, make_pendulum, CartpoleParams, Environment,
    PendulumParams,
};
use clfshape_core::gridsolve::{GridSpec, InputSet, Terminal, DEFAULT_ESCAPE_PENALTY};
use clfshape_core::quadratics::{synthesize_clf, QuadraticForm};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::read_quadratic_csv;

/// Largest discount factor accepted in a sweep.
pub const MAX_GAMMA: f64 = 0.999;

/// Environment family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    /// Torque-limited pendulum.
    Pendulum,
    /// Double integrator on `[−2, 2]²`.
    DoubleIntegrator,
    /// Force-limited cart-pole.
    Cartpole,
}

impl EnvName {
    /// Name used in file names and CSV rows.
    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::Pendulum => "pendulum",
            EnvName::DoubleIntegrator => "double_integrator",
            EnvName::Cartpole => "cartpole",
        }
    }

    fn state_dim(self) -> usize {
        match self {
            EnvName::Cartpole => 4,
            _ => 2,
        }
    }
}

/// Pendulum physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendulumConfig {
    /// Mass (kg).
    pub m: f64,
    /// Length (m).
    pub l: f64,
    /// Gravity (m/s²).
    pub g: f64,
    /// Viscous friction (N·m·s).
    pub b: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        let p = PendulumParams::default();
        PendulumConfig {
            m: p.m,
            l: p.l,
            g: p.g,
            b: p.b,
        }
    }
}

/// Cart-pole physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartpoleConfig {
    /// Cart mass (kg).
    pub cart_mass: f64,
    /// Pole mass (kg).
    pub pole_mass: f64,
    /// Pole length (m).
    pub pole_length: f64,
    /// Gravity (m/s²).
    pub g: f64,
}

impl Default for CartpoleConfig {
    fn default() -> Self {
        let p = CartpoleParams::default();
        CartpoleConfig {
            cart_mass: p.cart_mass,
            pole_mass: p.pole_mass,
            pole_length: p.pole_length,
            g: p.g,
        }
    }
}

/// Environment selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Environment family.
    pub name: EnvName,
    /// Time step (s); 0.1 for the pendulum and double integrator, 0.05 for
    /// the cart-pole.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Input bounds `H` swept as `|u| ≤ H`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_bounds: Option<Vec<f64>>,
    /// Pendulum parameters.
    pub pendulum: PendulumConfig,
    /// Cart-pole parameters.
    pub cartpole: CartpoleConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            name: EnvName::Pendulum,
            dt: None,
            input_bounds: None,
            pendulum: PendulumConfig::default(),
            cartpole: CartpoleConfig::default(),
        }
    }
}

/// Diagonal weights of `Q` and `R`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    /// Diagonal of `Q`; ones by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_diag: Option<Vec<f64>>,
    /// Diagonal of `R`; 0.1 per input by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_diag: Option<Vec<f64>>,
}

/// Where the shaping CLF comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClfSource {
    /// Riccati solution on the origin linearization with the run's `Q`, `R`.
    Dare {
        /// Discount factor of the Riccati design.
        #[serde(default = "one")]
        gamma_design: f64,
    },
    /// Matrix read from a headerless CSV, one row per line.
    File {
        /// Path to the CSV.
        path: String,
    },
    /// `W ≡ 0`, which makes the shaped cost equal the standard one.
    Zero,
}

fn one() -> f64 {
    1.0
}

impl Default for ClfSource {
    fn default() -> Self {
        ClfSource::Dare { gamma_design: 1.0 }
    }
}

/// Cost kind as spelled in configs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    /// Running cost `ℓ`.
    Standard,
    /// `ℓ + W(F) − W(x)`.
    Shaped,
}

impl From<KindName> for CostKind {
    fn from(k: KindName) -> Self {
        match k {
            KindName::Standard => CostKind::Standard,
            KindName::Shaped => CostKind::Shaped,
        }
    }
}

/// Terminal cost of an MPC horizon sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalName {
    /// The CLF `W`.
    Clf,
    /// No terminal cost.
    Zero,
}

impl TerminalName {
    /// Name used in CSV rows.
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalName::Clf => "clf",
            TerminalName::Zero => "zero",
        }
    }
}

impl From<TerminalName> for Terminal {
    fn from(t: TerminalName) -> Self {
        match t {
            TerminalName::Clf => Terminal::Clf,
            TerminalName::Zero => Terminal::Zero,
        }
    }
}

/// Rollout certification protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    /// Seeded initial conditions per certificate.
    pub n_trials: usize,
    /// Simulated time (s).
    pub horizon_seconds: f64,
    /// Radius of the success ball.
    pub success_radius: f64,
    /// `[lo, hi)` per state dimension the initial conditions are drawn from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ic_box: Option<Vec<[f64; 2]>>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            n_trials: 20,
            horizon_seconds: 20.0,
            success_radius: 0.05,
            ic_box: None,
        }
    }
}

/// Value-iteration settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Sup-norm stopping tolerance of value iteration.
    pub tol: f64,
    /// Sweep cap of value iteration.
    pub max_sweeps: usize,
    /// Stopping tolerance of policy evaluation.
    pub eval_tol: f64,
    /// Penalty added to successors that leave the grid box.
    pub escape_penalty: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-6,
            max_sweeps: 100_000,
            eval_tol: 1e-8,
            escape_penalty: DEFAULT_ESCAPE_PENALTY,
        }
    }
}

/// Certificate settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Radius of the origin ball excluded from grid suprema.
    pub exclusion_radius: f64,
    /// Suboptimality ranks certified per cell.
    pub ranks: Vec<usize>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            exclusion_radius: 0.05,
            ranks: vec![1, 2, 3],
        }
    }
}

/// MPC horizon sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    /// Prediction horizons `N`.
    pub horizons: Vec<usize>,
    /// Terminal costs compared.
    pub terminals: Vec<TerminalName>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizons: vec![0, 1, 2, 3, 5, 10, 20, 30, 50],
            terminals: vec![TerminalName::Clf, TerminalName::Zero],
        }
    }
}

/// One config drives every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Environment.
    pub env: EnvConfig,
    /// Nodes per state dimension (odd).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_counts: Option<Vec<usize>>,
    /// Input samples per input dimension (odd).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs_per_dim: Option<usize>,
    /// Running-cost weights.
    pub cost: CostConfig,
    /// Shaping CLF.
    pub clf: ClfSource,
    /// Discount factors swept.
    pub gamma_list: Vec<f64>,
    /// Cost kinds swept.
    pub cost_kinds: Vec<KindName>,
    /// Rollout protocol.
    pub rollout: RolloutConfig,
    /// Solver settings.
    pub solver: SolverConfig,
    /// Certificate settings.
    pub analysis: AnalysisConfig,
    /// MPC sweep settings.
    pub mpc: MpcConfig,
    /// Seed of the initial-condition stream.
    pub seed: u64,
    /// Output directory.
    pub out_dir: String,
    /// Write per-cell value and policy dumps.
    pub dump_fields: bool,
}

/// `0.00, 0.05, …, 0.95, 0.99`.
pub fn default_gamma_list() -> Vec<f64> {
    let mut g: Vec<f64> = (0..20).map(|i| (5 * i) as f64 / 100.0).collect();
    g.push(0.99);
    g
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            env: EnvConfig::default(),
            grid_counts: None,
            inputs_per_dim: None,
            cost: CostConfig::default(),
            clf: ClfSource::default(),
            gamma_list: default_gamma_list(),
            cost_kinds: vec![KindName::Standard, KindName::Shaped],
            rollout: RolloutConfig::default(),
            solver: SolverConfig::default(),
            analysis: AnalysisConfig::default(),
            mpc: MpcConfig::default(),
            seed: 0,
            out_dir: "out".into(),
            dump_fields: true,
        }
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Config(msg.into()))
}

fn positive_finite(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl ExperimentConfig {
    /// Defaults for the named environment.
    pub fn for_env(name: EnvName) -> Self {
        ExperimentConfig {
            env: EnvConfig {
                name,
                ..EnvConfig::default()
            },
            ..Self::default()
        }
    }

    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses and validates a JSON config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Pretty JSON with every field.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// State dimension of the selected environment.
    pub fn state_dim(&self) -> usize {
        self.env.name.state_dim()
    }

    /// Time step in effect.
    pub fn dt(&self) -> f64 {
        self.env.dt.unwrap_or(match self.env.name {
            EnvName::Cartpole => 0.05,
            _ => 0.1,
        })
    }

    /// Input bounds in effect.
    pub fn input_bounds(&self) -> Vec<f64> {
        self.env
            .input_bounds
            .clone()
            .unwrap_or_else(|| match self.env.name {
                EnvName::Pendulum => vec![20.0, 7.0, 4.0],
                EnvName::DoubleIntegrator => vec![20.0],
                EnvName::Cartpole => vec![10.0],
            })
    }

    /// Grid node counts in effect.
    pub fn grid_counts(&self) -> Vec<usize> {
        self.grid_counts
            .clone()
            .unwrap_or_else(|| match self.env.name {
                EnvName::Pendulum => vec![101, 101],
                EnvName::DoubleIntegrator => vec![81, 81],
                EnvName::Cartpole => vec![9, 15, 9, 15],
            })
    }

    /// Input samples per dimension in effect.
    pub fn inputs_per_dim(&self) -> usize {
        self.inputs_per_dim.unwrap_or(match self.env.name {
            EnvName::Pendulum => 41,
            EnvName::DoubleIntegrator => 81,
            EnvName::Cartpole => 21,
        })
    }

    /// `Q` diagonal in effect.
    pub fn q_diag(&self) -> Vec<f64> {
        self.cost
            .q_diag
            .clone()
            .unwrap_or_else(|| vec![1.0; self.state_dim()])
    }

    /// `R` diagonal in effect.
    pub fn r_diag(&self) -> Vec<f64> {
        self.cost.r_diag.clone().unwrap_or_else(|| vec![0.1])
    }

    /// Initial-condition box in effect.
    pub fn ic_box(&self) -> Vec<(f64, f64)> {
        match &self.rollout.ic_box {
            Some(b) => b.iter().map(|&[lo, hi]| (lo, hi)).collect(),
            None => match self.env.name {
                EnvName::Pendulum => vec![(-PI, PI), (-0.1, 0.1)],
                EnvName::DoubleIntegrator => vec![(-1.0, 1.0), (-1.0, 1.0)],
                EnvName::Cartpole => vec![(-0.1, 0.1); 4],
            },
        }
    }

    /// Checks every field before any computation.
    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        if !positive_finite(self.dt()) {
            return invalid("env.dt must be positive");
        }
        let bounds = self.input_bounds();
        if bounds.is_empty() || !bounds.iter().all(|&h| positive_finite(h)) {
            return invalid("env.input_bounds must be a nonempty list of positive bounds");
        }
        let p = &self.env.pendulum;
        if ![p.m, p.l, p.g].iter().all(|&v| positive_finite(v)) || !(p.b.is_finite() && p.b >= 0.0)
        {
            return invalid("env.pendulum parameters must be positive (friction nonnegative)");
        }
        let c = &self.env.cartpole;
        if ![c.cart_mass, c.pole_mass, c.pole_length, c.g]
            .iter()
            .all(|&v| positive_finite(v))
        {
            return invalid("env.cartpole parameters must be positive");
        }
        let counts = self.grid_counts();
        if counts.len() != n || counts.iter().any(|&k| k < 3 || k % 2 == 0) {
            return invalid(format!(
                "grid_counts must list {n} odd counts of at least 3"
            ));
        }
        let m = self.inputs_per_dim();
        if m == 0 || m.is_multiple_of(2) {
            return invalid("inputs_per_dim must be odd");
        }
        let q = self.q_diag();
        if q.len() != n || !q.iter().all(|&v| positive_finite(v)) {
            return invalid(format!("cost.q_diag must list {n} positive weights"));
        }
        let r = self.r_diag();
        if r.len() != 1 || !r.iter().all(|&v| positive_finite(v)) {
            return invalid("cost.r_diag must list 1 positive weight");
        }
        match &self.clf {
            ClfSource::Dare { gamma_design } if !(0.0..=1.0).contains(gamma_design) => {
                return invalid("clf.gamma_design must lie in [0, 1]");
            }
            ClfSource::File { path } => {
                let w = read_quadratic_csv(Path::new(path))
                    .map_err(|e| CliError::Config(format!("clf file {path}: {e}")))?;
                if w.dim() != n {
                    return invalid(format!(
                        "clf file {path} has dimension {}, expected {n}",
                        w.dim()
                    ));
                }
            }
            _ => {}
        }
        if self.gamma_list.is_empty()
            || !self
                .gamma_list
                .iter()
                .all(|g| (0.0..=MAX_GAMMA).contains(g))
        {
            return invalid(format!(
                "gamma_list must be a nonempty subset of [0, {MAX_GAMMA}]"
            ));
        }
        if self.cost_kinds.is_empty()
            || (self.cost_kinds.len() == 2 && self.cost_kinds[0] == self.cost_kinds[1])
        {
            return invalid("cost_kinds must list distinct kinds");
        }
        let ro = &self.rollout;
        if ro.n_trials == 0
            || !positive_finite(ro.horizon_seconds)
            || !positive_finite(ro.success_radius)
        {
            return invalid("rollout needs trials, a positive horizon and a positive radius");
        }
        let ic = self.ic_box();
        if ic.len() != n
            || ic
                .iter()
                .any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
        {
            return invalid(format!(
                "rollout.ic_box must list {n} finite [lo, hi] pairs"
            ));
        }
        let s = &self.solver;
        if !positive_finite(s.tol) || !positive_finite(s.eval_tol) || s.max_sweeps == 0 {
            return invalid("solver tolerances and sweep cap must be positive");
        }
        if !(s.escape_penalty.is_finite() && s.escape_penalty >= 0.0) {
            return invalid("solver.escape_penalty must be finite and nonnegative");
        }
        let a = &self.analysis;
        if !(a.exclusion_radius.is_finite() && a.exclusion_radius >= 0.0) {
            return invalid("analysis.exclusion_radius must be nonnegative");
        }
        if a.ranks.is_empty() || a.ranks.iter().any(|&k| k == 0 || k > m) {
            return invalid(format!("analysis.ranks must lie in 1..={m}"));
        }
        if self.out_dir.is_empty() {
            return invalid("out_dir must not be empty");
        }
        let env = self.environment(bounds[0])?;
        for (d, &(lo, hi)) in ic.iter().enumerate() {
            let (blo, bhi) = env.state_box[d];
            if lo < blo || hi > bhi {
                return invalid("rollout.ic_box must lie inside the state box");
            }
        }
        Ok(())
    }

    /// The environment with input bound `h`.
    pub fn environment(&self, h: f64) -> Result<Environment> {
        let dt = self.dt();
        let env = match self.env.name {
            EnvName::Pendulum => {
                let p = self.env.pendulum;
                make_pendulum(
                    dt,
                    h,
                    PendulumParams {
                        m: p.m,
                        l: p.l,
                        g: p.g,
                        b: p.b,
                    },
                )?
            }
            EnvName::DoubleIntegrator => make_double_integrator(dt)?.with_input_bound(h)?,
            EnvName::Cartpole => {
                let c = self.env.cartpole;
                make_cartpole(
                    dt,
                    h,
                    CartpoleParams {
                        cart_mass: c.cart_mass,
                        pole_mass: c.pole_mass,
                        pole_length: c.pole_length,
                        g: c.g,
                    },
                )?
            }
        };
        Ok(env)
    }

    /// Grid over the environment's state box.
    pub fn grid(&self, env: &Environment) -> Result<GridSpec> {
        Ok(GridSpec::for_env(env, self.grid_counts())?)
    }

    /// Input samples over the environment's input box.
    pub fn input_set(&self, env: &Environment) -> Result<InputSet> {
        Ok(InputSet::for_env(env, self.inputs_per_dim())?)
    }

    /// Running cost `ℓ`.
    pub fn running_cost(&self) -> RunningCost {
        RunningCost::diagonal(&self.q_diag(), &self.r_diag())
    }

    /// The shaping CLF for `env`.
    pub fn clf(&self, env: &Environment) -> Result<QuadraticForm> {
        match &self.clf {
            ClfSource::Dare { gamma_design } => {
                let q = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.q_diag()));
                let r = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.r_diag()));
                Ok(synthesize_clf(env, &q, &r, *gamma_design)?)
            }
            ClfSource::File { path } => read_quadratic_csv(Path::new(path)),
            ClfSource::Zero => Ok(QuadraticForm::zero(env.state_dim())),
        }
    }

    /// Rollout protocol with the configured seed.
    pub fn protocol(&self) -> RolloutProtocol {
        RolloutProtocol {
            n_trials: self.rollout.n_trials,
            ic_box: self.ic_box(),
            horizon_seconds: self.rollout.horizon_seconds,
            success_radius: self.rollout.success_radius,
            seed: self.seed,
        }
    }
}
