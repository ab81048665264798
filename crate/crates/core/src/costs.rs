//! Standard running cost `ℓ = Q(x) + R(u)` and its CLF-reshaped variant
//! `W(F(x,u)) − W(x) + ℓ(x,u)`.

use crate::dynamics::{Environment, RolloutTrace};
use crate::error::{Error, Result};
use crate::math::powi;
use crate::quadratics::QuadraticForm;

/// `ℓ(x,u) = Q(x) + R(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningCost {
    /// State weight.
    pub q: QuadraticForm,
    /// Input weight.
    pub r: QuadraticForm,
}

impl RunningCost {
    /// Builds `ℓ` from its two quadratic forms.
    pub fn new(q: QuadraticForm, r: QuadraticForm) -> Self {
        RunningCost { q, r }
    }

    /// `Q = diag(q)`, `R = diag(r)`.
    pub fn diagonal(q: &[f64], r: &[f64]) -> Self {
        RunningCost {
            q: QuadraticForm::diagonal(q),
            r: QuadraticForm::diagonal(r),
        }
    }

    /// `ℓ(x,u)`.
    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        self.q.eval(x) + self.r.eval(u)
    }

    /// Multiplies both weights by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        RunningCost {
            q: self.q.scaled(c),
            r: self.r.scaled(c),
        }
    }
}

/// Which per-step cost a solver or trace sum uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CostKind {
    /// `ℓ(x,u)`.
    Standard,
    /// `W(F(x,u)) − W(x) + ℓ(x,u)`.
    Shaped,
}

impl CostKind {
    /// Lower-case label used in reports.
    pub fn as_str(self) -> &'static str {
        match self {
            CostKind::Standard => "standard",
            CostKind::Shaped => "shaped",
        }
    }
}

/// The reshaped running cost bound to an environment.
#[derive(Debug, Clone, Copy)]
pub struct ShapedCost<'a> {
    /// Underlying `ℓ`.
    pub base: &'a RunningCost,
    /// Candidate CLF.
    pub w: &'a QuadraticForm,
    /// Dynamics supplying `F`.
    pub env: &'a Environment,
}

/// `ℓ(x,u)`.
pub fn eval_running(cost: &RunningCost, x: &[f64], u: &[f64]) -> f64 {
    cost.eval(x, u)
}

/// `W(F(x,u)) − W(x) + ℓ(x,u)`; rejects inputs outside the input box.
pub fn eval_shaped(shaped: &ShapedCost<'_>, x: &[f64], u: &[f64]) -> Result<f64> {
    let next = shaped.env.step(x, u)?;
    Ok(shaped.w.eval(&next) - shaped.w.eval(x) + shaped.base.eval(x, u))
}

/// Per-step cost used when summing a trace.
#[derive(Debug, Clone, Copy)]
pub enum TraceCost<'a> {
    /// `ℓ(x_k, u_k)`.
    Standard(&'a RunningCost),
    /// `W(x_{k+1}) − W(x_k) + ℓ(x_k, u_k)`.
    Shaped(&'a RunningCost, &'a QuadraticForm),
}

impl TraceCost<'_> {
    /// Matching [`CostKind`].
    pub fn kind(&self) -> CostKind {
        match self {
            TraceCost::Standard(_) => CostKind::Standard,
            TraceCost::Shaped(..) => CostKind::Shaped,
        }
    }
}

/// `Σ_{k<T} γᵏ c(x_k, u_k)` over a trace.
pub fn trace_return(cost: TraceCost<'_>, trace: &RolloutTrace, gamma: f64) -> Result<f64> {
    let t = trace.horizon_steps;
    if trace.states.len() != t + 1 || trace.inputs.len() != t {
        return Err(Error::InvalidArgument(
            "trace lengths do not match its horizon".into(),
        ));
    }
    let mut total = 0.0;
    let mut discount = 1.0;
    for k in 0..t {
        let (x, u) = (&trace.states[k], &trace.inputs[k]);
        let c = match cost {
            TraceCost::Standard(l) => l.eval(x, u),
            TraceCost::Shaped(l, w) => w.eval(&trace.states[k + 1]) - w.eval(x) + l.eval(x, u),
        };
        total += discount * c;
        discount = powi(gamma, k + 1);
    }
    Ok(total)
}
