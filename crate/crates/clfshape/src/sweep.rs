//! Discount, input-bound and MPC-horizon sweeps.
//!
//! Cells run concurrently on the current rayon pool. Every reduction is per
//! cell or per node, so results do not depend on the number of workers, and
//! cells reach the sink in configuration order.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Instant;

use clfshape_core::analysis::{
    certify_stability, check_domination, check_proposition1, check_theorem1, condition_margin,
    empirical_gamma_bar, estimate_growth_constant, gap_ratio, CertificateInputs, CompositeCheck,
    DominationVerdict, StabilityCertificate,
};
use clfshape_core::costs::CostKind;
use clfshape_core::dynamics::Environment;
use clfshape_core::gridsolve::{
    finite_horizon_value, make_suboptimal, optimality_gap, policy_evaluation, value_iteration,
    BackupTable, GridSpec, InputSet, TabularPolicy, ValueField,
};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, KindName, TerminalName};
use crate::error::{CliError, Result};

/// One discount-sweep cell as reported in `sweep.csv`.
///
/// `margin` is the condition margin with the rank-2 gap, and
/// `rollout_success_fraction` belongs to the greedy policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Environment name.
    pub env: &'static str,
    /// Input bound.
    pub h: f64,
    /// Cost kind.
    pub cost_kind: KindName,
    /// Discount factor.
    pub gamma: f64,
    /// Value-iteration sweeps.
    pub sweeps: Option<usize>,
    /// Residual of the returned field.
    pub bellman_residual: Option<f64>,
    /// Growth constant `C_γ` or `C̃_γ`.
    pub c_constant: Option<f64>,
    /// Gap ratio of the rank-2 policy.
    pub delta_rank2: Option<f64>,
    /// `1/(1−γ) − (C + max(δ₂, 0))`.
    pub margin: Option<f64>,
    /// `margin > 0`.
    pub predicted_stable: Option<bool>,
    /// Rollout success fraction of the greedy policy.
    pub rollout_success_fraction: Option<f64>,
    /// `ok` or the first error met in the cell.
    pub status: String,
}

/// Certificate of one rank-`k` policy in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateRow {
    /// Environment name.
    pub env: &'static str,
    /// Input bound.
    pub h: f64,
    /// Cost kind.
    pub cost_kind: KindName,
    /// Discount factor.
    pub gamma: f64,
    /// Suboptimality rank.
    pub rank: usize,
    /// The certificate, if it could be computed.
    pub certificate: Option<StabilityCertificate>,
    /// `ok` or the error.
    pub status: String,
}

impl CertificateRow {
    /// Composite check of a shaped-cost certificate.
    pub fn composite(&self) -> Option<CompositeCheck> {
        self.certificate.as_ref().and_then(|c| c.composite)
    }
}

/// Optimal field and greedy policy of a cell, kept for dumps.
#[derive(Debug, Clone)]
pub struct CellFields {
    /// Grid of the field.
    pub grid: GridSpec,
    /// Inputs the policy indexes.
    pub inputs: InputSet,
    /// Optimal value.
    pub value: ValueField,
    /// Greedy policy.
    pub policy: TabularPolicy,
}

/// Everything produced by one cell.
#[derive(Debug, Clone)]
pub struct CellOutput {
    /// Position in configuration order.
    pub index: usize,
    /// Row of `sweep.csv`.
    pub row: SweepRow,
    /// Rows of `certificates.csv`.
    pub certificates: Vec<CertificateRow>,
    /// Wall time of the cell (s).
    pub wall_time_s: f64,
    /// Field and policy, when dumps are enabled.
    pub fields: Option<CellFields>,
}

/// Domination verdict of one `(H, γ)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DominationRow {
    /// Environment name.
    pub env: &'static str,
    /// Input bound.
    pub h: f64,
    /// The verdict.
    pub verdict: DominationVerdict,
}

/// Smallest stabilizing discount per `(H, kind)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// Environment name.
    pub env: &'static str,
    /// Input bound.
    pub h: f64,
    /// Cost kind.
    pub cost_kind: KindName,
    /// Smallest swept `γ` whose greedy policy passed every trial.
    pub min_stabilizing_gamma: Option<f64>,
}

/// Result of a discount sweep.
#[derive(Debug, Clone)]
pub struct SweepReport {
    /// Cells in configuration order.
    pub cells: Vec<CellOutput>,
    /// Domination verdicts for every `(H, γ)` run with both kinds.
    pub domination: Vec<DominationRow>,
    /// Empirical `γ̄` per input bound.
    pub gamma_bar: Vec<(f64, Option<f64>)>,
    /// Smallest stabilizing `γ` per `(H, kind)`.
    pub summary: Vec<SummaryRow>,
}

impl SweepReport {
    /// An empty report.
    pub fn empty() -> Self {
        SweepReport {
            cells: Vec::new(),
            domination: Vec::new(),
            gamma_bar: Vec::new(),
            summary: Vec::new(),
        }
    }

    /// Rows of `sweep.csv`.
    pub fn rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.cells.iter().map(|c| &c.row)
    }

    /// Rows of `certificates.csv`.
    pub fn certificates(&self) -> impl Iterator<Item = &CertificateRow> {
        self.cells.iter().flat_map(|c| c.certificates.iter())
    }

    /// Whether any cell or certificate recorded an error.
    pub fn has_failures(&self) -> bool {
        self.rows().any(|r| r.status != "ok") || self.certificates().any(|c| c.status != "ok")
    }

    /// Smallest stabilizing `γ` for `(h, kind)`, if that pair was swept.
    pub fn min_stabilizing_gamma(&self, h: f64, kind: KindName) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.h == h && s.cost_kind == kind)
            .and_then(|s| s.min_stabilizing_gamma)
    }

    /// The row of one cell.
    pub fn row(&self, h: f64, kind: KindName, gamma: f64) -> Option<&SweepRow> {
        self.rows()
            .find(|r| r.h == h && r.cost_kind == kind && r.gamma == gamma)
    }
}

/// Shared per-bound setup.
pub struct Problem {
    /// Environment with the bound applied.
    pub env: Environment,
    /// Transition table with the CLF.
    pub table: BackupTable,
}

impl Problem {
    /// Builds the environment, grid, inputs, CLF and table for bound `h`.
    pub fn build(cfg: &ExperimentConfig, h: f64) -> Result<Self> {
        let env = cfg.environment(h)?;
        let grid = cfg.grid(&env)?;
        let inputs = cfg.input_set(&env)?;
        let w = cfg.clf(&env)?;
        let table = BackupTable::build(
            &env,
            &grid,
            &inputs,
            &cfg.running_cost(),
            Some(&w),
            cfg.solver.escape_penalty,
        )?;
        Ok(Problem { env, table })
    }
}

fn status_of(err: &CliError) -> String {
    err.to_string().replace([',', '\n'], ";")
}

/// Hands finished cells to the sink in configuration order as soon as
/// their predecessors are done.
struct OrderedSink<F> {
    next: usize,
    pending: BTreeMap<usize, CellOutput>,
    sink: F,
    error: Option<CliError>,
    done: Vec<CellOutput>,
}

impl<F: FnMut(&CellOutput) -> Result<()>> OrderedSink<F> {
    fn new(sink: F) -> Self {
        OrderedSink {
            next: 0,
            pending: BTreeMap::new(),
            sink,
            error: None,
            done: Vec::new(),
        }
    }

    fn push(&mut self, cell: CellOutput) {
        self.pending.insert(cell.index, cell);
        while let Some(cell) = self.pending.remove(&self.next) {
            if self.error.is_none() {
                if let Err(e) = (self.sink)(&cell) {
                    self.error = Some(e);
                }
            }
            self.next += 1;
            self.done.push(cell);
        }
    }
}

struct CellSpec {
    index: usize,
    kind: KindName,
    gamma: f64,
}

fn empty_row(env: &'static str, h: f64, kind: KindName, gamma: f64, status: String) -> SweepRow {
    SweepRow {
        env,
        h,
        cost_kind: kind,
        gamma,
        sweeps: None,
        bellman_residual: None,
        c_constant: None,
        delta_rank2: None,
        margin: None,
        predicted_stable: None,
        rollout_success_fraction: None,
        status,
    }
}

/// Certificate of the rank-`k` policy of one cell.
fn certify_rank(
    cfg: &ExperimentConfig,
    problem: &Problem,
    kind: CostKind,
    gamma: f64,
    v_star: &ValueField,
    greedy: &TabularPolicy,
    rank: usize,
) -> Result<StabilityCertificate> {
    let policy = if rank == 1 {
        greedy.clone()
    } else {
        make_suboptimal(&problem.table, kind, gamma, v_star, rank)?
    };
    let v_pi = policy_evaluation(&problem.table, kind, gamma, &policy, cfg.solver.eval_tol)?;
    let protocol = cfg.protocol();
    let inputs = CertificateInputs {
        env: &problem.env,
        table: &problem.table,
        gamma,
        policy: &policy,
        v_star,
        v_pi: &v_pi,
        exclusion_radius: cfg.analysis.exclusion_radius,
        protocol: &protocol,
    };
    Ok(match kind {
        CostKind::Standard => check_proposition1(&inputs)?,
        CostKind::Shaped => check_theorem1(&inputs, cfg.solver.tol)?,
    })
}

fn rank2_delta(
    cfg: &ExperimentConfig,
    problem: &Problem,
    kind: CostKind,
    gamma: f64,
    v_star: &ValueField,
) -> Result<f64> {
    let policy = make_suboptimal(&problem.table, kind, gamma, v_star, 2)?;
    let v_pi = policy_evaluation(&problem.table, kind, gamma, &policy, cfg.solver.eval_tol)?;
    let gap = optimality_gap(&v_pi, v_star)?;
    Ok(gap_ratio(
        &gap,
        &problem.table.running().q,
        problem.table.grid(),
        cfg.analysis.exclusion_radius,
    )?)
}

/// Runs one cell; returns the output and the optimal field for domination.
fn run_cell(
    cfg: &ExperimentConfig,
    problem: &Problem,
    h: f64,
    spec: &CellSpec,
) -> (CellOutput, Option<ValueField>) {
    let start = Instant::now();
    let env_name = cfg.env.name.as_str();
    let kind: CostKind = spec.kind.into();
    let gamma = spec.gamma;
    let finish =
        |row: SweepRow, certificates: Vec<CertificateRow>, fields: Option<CellFields>| CellOutput {
            index: spec.index,
            row,
            certificates,
            wall_time_s: start.elapsed().as_secs_f64(),
            fields,
        };
    let (v_star, greedy) = match value_iteration(
        &problem.table,
        kind,
        gamma,
        cfg.solver.tol,
        cfg.solver.max_sweeps,
    ) {
        Ok(r) => r,
        Err(e) => {
            let row = empty_row(env_name, h, spec.kind, gamma, status_of(&e.into()));
            return (finish(row, Vec::new(), None), None);
        }
    };
    let mut row = empty_row(env_name, h, spec.kind, gamma, "ok".into());
    row.sweeps = Some(v_star.meta.sweep_count);
    row.bellman_residual = Some(v_star.meta.bellman_residual);
    let mut first_error: Option<String> = None;
    let q = &problem.table.running().q;
    match estimate_growth_constant(
        &v_star,
        q,
        problem.table.grid(),
        cfg.analysis.exclusion_radius,
    ) {
        Ok(c) => row.c_constant = Some(c),
        Err(e) => first_error = first_error.or(Some(status_of(&e.into()))),
    }
    let mut certificates = Vec::with_capacity(cfg.analysis.ranks.len());
    for &rank in &cfg.analysis.ranks {
        let result = certify_rank(cfg, problem, kind, gamma, &v_star, &greedy, rank);
        let status = match &result {
            Ok(_) => "ok".to_string(),
            Err(e) => status_of(e),
        };
        if status != "ok" && first_error.is_none() {
            first_error = Some(format!("rank {rank}: {status}"));
        }
        certificates.push(CertificateRow {
            env: env_name,
            h,
            cost_kind: spec.kind,
            gamma,
            rank,
            certificate: result.ok(),
            status,
        });
    }
    let cert_of = |rank: usize| {
        certificates
            .iter()
            .find(|c| c.rank == rank)
            .and_then(|c| c.certificate.as_ref())
    };
    row.delta_rank2 = match cert_of(2) {
        Some(c) => Some(c.delta),
        None if cfg.analysis.ranks.contains(&2) => None,
        None => match rank2_delta(cfg, problem, kind, gamma, &v_star) {
            Ok(d) => Some(d),
            Err(e) => {
                first_error = first_error.or(Some(status_of(&e)));
                None
            }
        },
    };
    if let (Some(c), Some(d)) = (row.c_constant, row.delta_rank2) {
        let m = condition_margin(gamma, c, d);
        row.margin = Some(m);
        row.predicted_stable = Some(m > 0.0);
    }
    row.rollout_success_fraction = match cert_of(1) {
        Some(c) => Some(c.empirical.success_fraction()),
        None if cfg.analysis.ranks.contains(&1) => None,
        None => {
            let controller = greedy.controller(problem.table.grid(), problem.table.inputs());
            match certify_stability(&problem.env, &controller, &cfg.protocol()) {
                Ok(r) => Some(r.success_fraction()),
                Err(e) => {
                    first_error = first_error.or(Some(status_of(&e.into())));
                    None
                }
            }
        }
    };
    if let Some(e) = first_error {
        row.status = e;
    }
    let fields = cfg.dump_fields.then(|| CellFields {
        grid: problem.table.grid().clone(),
        inputs: problem.table.inputs().clone(),
        value: v_star.clone(),
        policy: greedy,
    });
    (finish(row, certificates, fields), Some(v_star))
}

/// Runs the discount sweep and returns the full report.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    run_sweep_with(cfg, |_| Ok(()))
}

/// Runs the discount sweep, handing each finished cell to `sink` in
/// configuration order.
///
/// Cell failures are recorded in-row and the sweep continues; an error from
/// `sink` stops the sweep after the running cells finish.
pub fn run_sweep_with<F>(cfg: &ExperimentConfig, sink: F) -> Result<SweepReport>
where
    F: FnMut(&CellOutput) -> Result<()> + Send,
{
    cfg.validate()?;
    let env_name = cfg.env.name.as_str();
    let ordered = Mutex::new(OrderedSink::new(sink));
    let mut domination = Vec::new();
    let mut gamma_bar = Vec::new();
    let mut offset = 0;
    for h in cfg.input_bounds() {
        let specs: Vec<CellSpec> = cfg
            .cost_kinds
            .iter()
            .flat_map(|&kind| cfg.gamma_list.iter().map(move |&gamma| (kind, gamma)))
            .enumerate()
            .map(|(i, (kind, gamma))| CellSpec {
                index: offset + i,
                kind,
                gamma,
            })
            .collect();
        offset += specs.len();
        let problem = Problem::build(cfg, h);
        let fields: Vec<(KindName, f64, Option<ValueField>)> = specs
            .par_iter()
            .map(|spec| {
                let (out, field) = match &problem {
                    Ok(p) => run_cell(cfg, p, h, spec),
                    Err(e) => {
                        let row = empty_row(env_name, h, spec.kind, spec.gamma, status_of(e));
                        let out = CellOutput {
                            index: spec.index,
                            row,
                            certificates: Vec::new(),
                            wall_time_s: 0.0,
                            fields: None,
                        };
                        (out, None)
                    }
                };
                ordered.lock().expect("sink lock").push(out);
                (spec.kind, spec.gamma, field)
            })
            .collect();
        if let Some(e) = ordered.lock().expect("sink lock").error.take() {
            return Err(e);
        }
        let mut verdicts = Vec::new();
        for &gamma in &cfg.gamma_list {
            let find = |kind: KindName| {
                fields
                    .iter()
                    .find(|(k, g, _)| *k == kind && *g == gamma)
                    .and_then(|(_, _, f)| f.as_ref())
            };
            if let (Some(v), Some(vt)) = (find(KindName::Standard), find(KindName::Shaped)) {
                let verdict = check_domination(v, vt)?;
                verdicts.push(verdict.clone());
                domination.push(DominationRow {
                    env: env_name,
                    h,
                    verdict,
                });
            }
        }
        gamma_bar.push((h, empirical_gamma_bar(&verdicts)));
    }
    let cells = ordered.into_inner().expect("sink lock").done;
    let mut summary = Vec::new();
    for h in cfg.input_bounds() {
        for &kind in &cfg.cost_kinds {
            let min = cells
                .iter()
                .map(|c| &c.row)
                .filter(|r| r.h == h && r.cost_kind == kind && r.status == "ok")
                .filter(|r| r.rollout_success_fraction == Some(1.0))
                .map(|r| r.gamma)
                .reduce(f64::min);
            summary.push(SummaryRow {
                env: env_name,
                h,
                cost_kind: kind,
                min_stabilizing_gamma: min,
            });
        }
    }
    Ok(SweepReport {
        cells,
        domination,
        gamma_bar,
        summary,
    })
}

/// One MPC cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcRow {
    /// Environment name.
    pub env: &'static str,
    /// Input bound.
    pub h: f64,
    /// Terminal cost.
    pub terminal: TerminalName,
    /// Prediction horizon `N`.
    pub horizon: usize,
    /// `N = 0` without terminal cost: the policy is the tie-break default.
    pub degenerate: bool,
    /// Successful trials.
    pub n_success: Option<usize>,
    /// Trials run.
    pub n_trials: usize,
    /// `ok` or the error.
    pub status: String,
}

impl MpcRow {
    /// Fraction of successful trials.
    pub fn success_fraction(&self) -> Option<f64> {
        self.n_success.map(|s| s as f64 / self.n_trials as f64)
    }
}

/// Smallest stabilizing horizon per `(H, terminal)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSummaryRow {
    /// Environment name.
    pub env: &'static str,
    /// Input bound.
    pub h: f64,
    /// Terminal cost.
    pub terminal: TerminalName,
    /// Smallest non-degenerate swept `N` passing every trial.
    pub min_stabilizing_horizon: Option<usize>,
}

/// Result of an MPC horizon sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MpcReport {
    /// Cells in configuration order.
    pub rows: Vec<MpcRow>,
    /// Smallest stabilizing horizons.
    pub summary: Vec<MpcSummaryRow>,
}

impl MpcReport {
    /// Whether any cell recorded an error.
    pub fn has_failures(&self) -> bool {
        self.rows.iter().any(|r| r.status != "ok")
    }

    /// Smallest stabilizing horizon for `(h, terminal)`.
    pub fn min_stabilizing_horizon(&self, h: f64, terminal: TerminalName) -> Option<usize> {
        self.summary
            .iter()
            .find(|s| s.h == h && s.terminal == terminal)
            .and_then(|s| s.min_stabilizing_horizon)
    }
}

/// Certifies the receding-horizon controller for every `(H, terminal, N)`.
pub fn run_mpc_sweep(
    cfg: &ExperimentConfig,
    horizons: &[usize],
    terminals: &[TerminalName],
) -> Result<MpcReport> {
    cfg.validate()?;
    let env_name = cfg.env.name.as_str();
    let protocol = cfg.protocol();
    let mut rows = Vec::new();
    for h in cfg.input_bounds() {
        let specs: Vec<(TerminalName, usize)> = terminals
            .iter()
            .flat_map(|&t| horizons.iter().map(move |&n| (t, n)))
            .collect();
        let problem = Problem::build(cfg, h);
        let mut group: Vec<MpcRow> = specs
            .par_iter()
            .map(|&(terminal, horizon)| {
                let mut row = MpcRow {
                    env: env_name,
                    h,
                    terminal,
                    horizon,
                    degenerate: horizon == 0 && terminal == TerminalName::Zero,
                    n_success: None,
                    n_trials: protocol.n_trials,
                    status: "ok".into(),
                };
                let result = problem.as_ref().map_err(status_of).and_then(|p| {
                    let (_, policy) = finite_horizon_value(&p.table, terminal.into(), horizon)
                        .map_err(|e| status_of(&e.into()))?;
                    let controller = policy.controller(p.table.grid(), p.table.inputs());
                    certify_stability(&p.env, &controller, &protocol)
                        .map_err(|e| status_of(&e.into()))
                });
                match result {
                    Ok(rec) => row.n_success = Some(rec.n_success),
                    Err(e) => row.status = e,
                }
                row
            })
            .collect();
        rows.append(&mut group);
    }
    let mut summary = Vec::new();
    for h in cfg.input_bounds() {
        for &terminal in terminals {
            let min = rows
                .iter()
                .filter(|r| r.h == h && r.terminal == terminal && !r.degenerate && r.status == "ok")
                .filter(|r| r.n_success == Some(r.n_trials))
                .map(|r| r.horizon)
                .min();
            summary.push(MpcSummaryRow {
                env: env_name,
                h,
                terminal,
                min_stabilizing_horizon: min,
            });
        }
    }
    Ok(MpcReport { rows, summary })
}
