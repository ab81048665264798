//! Growth constants, stability conditions, domination and rollout-based
//! stability certification.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::costs::CostKind;
use crate::dynamics::{rollout, Controller, Environment, RolloutTrace};
use crate::error::{Error, Result};
use crate::gridsolve::{
    optimality_gap, BackupTable, GapField, GridSpec, TabularPolicy, ValueField,
};
use crate::math::norm2;
use crate::quadratics::QuadraticForm;

/// Radius of the origin ball excluded from grid suprema, equal to the
/// success radius.
pub const DEFAULT_EXCLUSION_RADIUS: f64 = 0.05;

/// Relative slack for the domination test: `Ṽ* − V* ≤ slack·(1 + |V*|)`.
pub const DOMINATION_SLACK: f64 = 1e-6;

/// Measured constants bounding the optimal values by `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthConstants {
    /// `max V*_γ / Q` for the standard cost.
    pub c_gamma: f64,
    /// `max Ṽ*_γ / Q` for the shaped cost.
    pub c_tilde_gamma: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Excluded origin radius.
    pub exclusion_radius: f64,
}

fn ratio_sup(
    values: &[f64],
    q: &QuadraticForm,
    grid: &GridSpec,
    exclusion_radius: f64,
) -> Result<f64> {
    if values.len() != grid.node_count() {
        return Err(Error::DimensionMismatch {
            expected: grid.node_count(),
            got: values.len(),
        });
    }
    let mut x = alloc::vec![0.0; grid.dim()];
    let mut best: Option<f64> = None;
    for (idx, &v) in values.iter().enumerate() {
        grid.node_coords_into(idx, &mut x);
        if norm2(&x) <= exclusion_radius {
            continue;
        }
        let r = v / q.eval(&x);
        best = Some(best.map_or(r, |b| b.max(r)));
    }
    best.ok_or(Error::EmptyNodeSet)
}

/// `max V(x)/Q(x)` over nodes with `‖x‖ > exclusion_radius`.
pub fn estimate_growth_constant(
    field: &ValueField,
    q: &QuadraticForm,
    grid: &GridSpec,
    exclusion_radius: f64,
) -> Result<f64> {
    ratio_sup(&field.values, q, grid, exclusion_radius)
}

/// `δ = max gap(x)/Q(x)` over nodes with `‖x‖ > exclusion_radius`.
pub fn gap_ratio(
    gap: &GapField,
    q: &QuadraticForm,
    grid: &GridSpec,
    exclusion_radius: f64,
) -> Result<f64> {
    ratio_sup(&gap.values, q, grid, exclusion_radius)
}

/// `1/(1−γ) − (C + max(δ, 0))`.
pub fn condition_margin(gamma: f64, c: f64, delta: f64) -> f64 {
    1.0 / (1.0 - gamma) - (c + delta.max(0.0))
}

/// Initial-condition distribution and success test for rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutProtocol {
    /// Number of seeded initial conditions.
    pub n_trials: usize,
    /// Per-dimension `[lo, hi)` the initial conditions are drawn from.
    pub ic_box: Vec<(f64, f64)>,
    /// Simulated time (s).
    pub horizon_seconds: f64,
    /// Radius of the success ball.
    pub success_radius: f64,
    /// Seed of the initial-condition stream.
    pub seed: u64,
}

impl RolloutProtocol {
    /// 20 trials, 20 s, radius 0.05 over `ic_box`.
    pub fn new(ic_box: Vec<(f64, f64)>, seed: u64) -> Self {
        RolloutProtocol {
            n_trials: 20,
            ic_box,
            horizon_seconds: 20.0,
            success_radius: 0.05,
            seed,
        }
    }

    /// Number of steps covering the horizon at time step `dt`.
    pub fn horizon_steps(&self, dt: f64) -> usize {
        libm::round(self.horizon_seconds / dt) as usize
    }

    /// The seeded initial conditions, independent of any parallelism.
    pub fn initial_conditions(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n_trials)
            .map(|_| {
                self.ic_box
                    .iter()
                    .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..hi) } else { lo })
                    .collect()
            })
            .collect()
    }
}

/// Outcome of the rollout trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalRecord {
    /// Trials run.
    pub n_trials: usize,
    /// Trials that entered and stayed in the success ball.
    pub n_success: usize,
    /// Success-ball radius.
    pub success_set_radius: f64,
    /// Simulated time per trial (s).
    pub horizon_seconds: f64,
}

impl EmpiricalRecord {
    /// `n_success / n_trials`.
    pub fn success_fraction(&self) -> f64 {
        if self.n_trials == 0 {
            0.0
        } else {
            self.n_success as f64 / self.n_trials as f64
        }
    }

    /// Every trial succeeded.
    pub fn all_succeeded(&self) -> bool {
        self.n_trials > 0 && self.n_success == self.n_trials
    }
}

/// Whether the trace enters `‖x‖ < radius` and never leaves again.
pub fn trial_succeeds(trace: &RolloutTrace, radius: f64) -> bool {
    let norms = trace.state_norms();
    match norms.iter().position(|&r| r < radius) {
        Some(k) => norms[k..].iter().all(|&r| r < radius),
        None => false,
    }
}

/// Runs the seeded trials of `protocol` under `controller`.
pub fn certify_stability<C: Controller + ?Sized>(
    env: &Environment,
    controller: &C,
    protocol: &RolloutProtocol,
) -> Result<EmpiricalRecord> {
    if protocol.n_trials == 0 {
        return Err(Error::InvalidArgument(
            "at least one trial is required".into(),
        ));
    }
    if protocol.ic_box.len() != env.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: env.state_dim(),
            got: protocol.ic_box.len(),
        });
    }
    let steps = protocol.horizon_steps(env.dt);
    let mut n_success = 0;
    for x0 in protocol.initial_conditions() {
        let trace = rollout(env, controller, &x0, steps, None)?;
        if trial_succeeds(&trace, protocol.success_radius) {
            n_success += 1;
        }
    }
    Ok(EmpiricalRecord {
        n_trials: protocol.n_trials,
        n_success,
        success_set_radius: protocol.success_radius,
        horizon_seconds: protocol.horizon_seconds,
    })
}

/// Direct check of the composite candidate `𝒱̃ = W + γ·Ṽ^π` on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeCheck {
    /// `min [𝒱̃(x) − (1−γ)W(x) − γQ(x)]` over non-ball nodes.
    pub positivity_min: f64,
    /// `positivity_min > −2·tol`.
    pub positivity_holds: bool,
    /// `max [𝒱̃(F(x,π(x))) − 𝒱̃(x)]` over non-ball nodes.
    pub decrease_max: f64,
    /// `decrease_max < 0`.
    pub decrease_holds: bool,
}

/// Evaluates positivity and one-step decrease of `W + γ·Ṽ^π`.
///
/// The successor value is `W(F) + γ·(interp Ṽ^π(F) + escape penalty)`, the
/// same continuation the grid fixed point uses.
pub fn composite_check(
    table: &BackupTable,
    gamma: f64,
    policy: &TabularPolicy,
    v_pi_shaped: &ValueField,
    exclusion_radius: f64,
    tol: f64,
) -> Result<CompositeCheck> {
    let w = table
        .clf()
        .ok_or_else(|| Error::InvalidArgument("composite check needs a CLF".into()))?;
    if v_pi_shaped.meta.cost_kind != CostKind::Shaped {
        return Err(Error::MetadataMismatch(
            "composite check needs a shaped-cost field".into(),
        ));
    }
    let grid = table.grid();
    let q = &table.running().q;
    let v = &v_pi_shaped.values;
    let mut x = alloc::vec![0.0; grid.dim()];
    let mut pos_min = f64::INFINITY;
    let mut dec_max = f64::NEG_INFINITY;
    for node in 0..grid.node_count() {
        grid.node_coords_into(node, &mut x);
        if norm2(&x) <= exclusion_radius {
            continue;
        }
        let wx = w.eval(&x);
        let here = wx + gamma * v[node];
        pos_min = pos_min.min(here - ((1.0 - gamma) * wx + gamma * q.eval(&x)));
        let j = policy.at(node);
        let succ = table.w_next(node, j) + gamma * table.continuation(node, j, v);
        dec_max = dec_max.max(succ - here);
    }
    if pos_min == f64::INFINITY {
        return Err(Error::EmptyNodeSet);
    }
    Ok(CompositeCheck {
        positivity_min: pos_min,
        positivity_holds: pos_min > -2.0 * tol,
        decrease_max: dec_max,
        decrease_holds: dec_max < 0.0,
    })
}

/// Predicted and observed stability of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    /// `1/(1−γ) − (C + max(δ, 0))`.
    pub condition_margin: f64,
    /// Growth constant `C_γ` or `C̃_γ`.
    pub c_constant: f64,
    /// Measured `δ` (or `δ̃`).
    pub delta: f64,
    /// `condition_margin > 0`.
    pub predicted_stable: bool,
    /// Rollout outcome.
    pub empirical: EmpiricalRecord,
    /// Composite candidate check (shaped cost only).
    pub composite: Option<CompositeCheck>,
}

/// Inputs shared by the two stability checks.
#[derive(Debug, Clone, Copy)]
pub struct CertificateInputs<'a> {
    /// Environment used for rollouts.
    pub env: &'a Environment,
    /// Table the fields were computed on.
    pub table: &'a BackupTable,
    /// Discount factor.
    pub gamma: f64,
    /// Policy under test.
    pub policy: &'a TabularPolicy,
    /// Optimal value field.
    pub v_star: &'a ValueField,
    /// Value of `policy`.
    pub v_pi: &'a ValueField,
    /// Excluded origin radius.
    pub exclusion_radius: f64,
    /// Rollout protocol.
    pub protocol: &'a RolloutProtocol,
}

fn certificate(inputs: &CertificateInputs<'_>, kind: CostKind) -> Result<StabilityCertificate> {
    let CertificateInputs {
        env,
        table,
        gamma,
        policy,
        v_star,
        v_pi,
        exclusion_radius,
        protocol,
    } = *inputs;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(
            "stability conditions need gamma in [0, 1)".into(),
        ));
    }
    if v_star.meta.cost_kind != kind || v_pi.meta.cost_kind != kind {
        return Err(Error::MetadataMismatch(
            "field cost kind does not match the check".into(),
        ));
    }
    let grid = table.grid();
    let q = &table.running().q;
    let c = estimate_growth_constant(v_star, q, grid, exclusion_radius)?;
    let delta = gap_ratio(&optimality_gap(v_pi, v_star)?, q, grid, exclusion_radius)?;
    let condition_margin = condition_margin(gamma, c, delta);
    let controller = policy.controller(grid, table.inputs());
    let empirical = certify_stability(env, &controller, protocol)?;
    Ok(StabilityCertificate {
        condition_margin,
        c_constant: c,
        delta,
        predicted_stable: condition_margin > 0.0,
        empirical,
        composite: None,
    })
}

/// Standard-cost condition `C_γ + δ < 1/(1−γ)` together with rollouts.
pub fn check_proposition1(inputs: &CertificateInputs<'_>) -> Result<StabilityCertificate> {
    certificate(inputs, CostKind::Standard)
}

/// Shaped-cost condition `C̃_γ + δ̃ < 1/(1−γ)`, rollouts, and the direct
/// composite-candidate check with tolerance `tol`.
pub fn check_theorem1(inputs: &CertificateInputs<'_>, tol: f64) -> Result<StabilityCertificate> {
    let mut cert = certificate(inputs, CostKind::Shaped)?;
    cert.composite = Some(composite_check(
        inputs.table,
        inputs.gamma,
        inputs.policy,
        inputs.v_pi,
        inputs.exclusion_radius,
        tol,
    )?);
    Ok(cert)
}

/// Pointwise comparison `Ṽ*_γ ≤ V*_γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominationVerdict {
    /// Discount factor of both fields.
    pub gamma: f64,
    /// Every node satisfies `Ṽ* − V* ≤ DOMINATION_SLACK·(1 + |V*|)`.
    pub holds_on_grid: bool,
    /// `max (Ṽ* − V*)`.
    pub worst_violation: f64,
    /// Nodes failing the slackened comparison.
    pub violating_nodes: usize,
}

/// Compares a standard and a shaped optimal field on the same grid.
pub fn check_domination(
    v_standard: &ValueField,
    v_shaped: &ValueField,
) -> Result<DominationVerdict> {
    if v_standard.values.len() != v_shaped.values.len() {
        return Err(Error::MetadataMismatch(
            "fields have different node counts".into(),
        ));
    }
    if v_standard.meta.gamma != v_shaped.meta.gamma {
        return Err(Error::MetadataMismatch(
            "fields have different discount factors".into(),
        ));
    }
    if v_standard.meta.cost_kind != CostKind::Standard
        || v_shaped.meta.cost_kind != CostKind::Shaped
    {
        return Err(Error::MetadataMismatch(
            "expected a standard and a shaped field".into(),
        ));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut violating = 0;
    for (&v, &vt) in v_standard.values.iter().zip(&v_shaped.values) {
        let d = vt - v;
        worst = worst.max(d);
        if d > DOMINATION_SLACK * (1.0 + v.abs()) {
            violating += 1;
        }
    }
    Ok(DominationVerdict {
        gamma: v_standard.meta.gamma,
        holds_on_grid: violating == 0,
        worst_violation: worst,
        violating_nodes: violating,
    })
}

/// Smallest swept `γ` at which domination holds.
pub fn empirical_gamma_bar(verdicts: &[DominationVerdict]) -> Option<f64> {
    verdicts
        .iter()
        .filter(|v| v.holds_on_grid)
        .map(|v| v.gamma)
        .reduce(f64::min)
}
