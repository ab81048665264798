//! Single-run subcommands: solve one cell, roll out its policy, verify the CLF.

use std::fs;
use std::path::Path;

use clfshape_core::costs::CostKind;
use clfshape_core::dynamics::rollout;
use clfshape_core::gridsolve::{value_iteration, TabularPolicy, ValueField};
use clfshape_core::quadratics::{check_lemma1_condition, verify_clf_on_grid};
use serde::Serialize;

use crate::config::{ExperimentConfig, KindName};
use crate::error::{CliError, Result};
use crate::io::{fmt_f64, write_field_dump, write_quadratic_csv};
use crate::sweep::Problem;

/// Summary of one solved cell.
#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    /// Environment name.
    pub env: &'static str,
    /// Input bound.
    pub h: f64,
    /// Cost kind.
    pub cost_kind: &'static str,
    /// Discount factor.
    pub gamma: f64,
    /// Value-iteration sweeps.
    pub sweeps: usize,
    /// Residual of the returned field.
    pub bellman_residual: f64,
    /// Value at the origin node.
    pub origin_value: f64,
}

fn solve_cell(
    cfg: &ExperimentConfig,
    h: f64,
    kind: KindName,
    gamma: f64,
) -> Result<(Problem, ValueField, TabularPolicy)> {
    cfg.validate()?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(CliError::Config(format!(
            "gamma {gamma} must lie in [0, 1)"
        )));
    }
    let problem = Problem::build(cfg, h)?;
    let (v, pi) = value_iteration(
        &problem.table,
        kind.into(),
        gamma,
        cfg.solver.tol,
        cfg.solver.max_sweeps,
    )?;
    Ok((problem, v, pi))
}

/// Solves one cell and dumps its field, policy and CLF to `dir`.
pub fn solve(
    cfg: &ExperimentConfig,
    h: f64,
    kind: KindName,
    gamma: f64,
    dir: &Path,
    force: bool,
) -> Result<SolveSummary> {
    let (problem, v, pi) = solve_cell(cfg, h, kind, gamma)?;
    let kind_str = CostKind::from(kind).as_str();
    let stem = format!("{}_H{}_{}_g{}", problem.env.name, h, kind_str, gamma);
    fs::create_dir_all(dir)?;
    for ext in ["csv", "json"] {
        let path = dir.join(format!("{stem}.{ext}"));
        if path.exists() && !force {
            return Err(CliError::Exists(path));
        }
    }
    write_field_dump(
        dir,
        &stem,
        problem.table.grid(),
        problem.table.inputs(),
        &v,
        &pi,
    )?;
    if let Some(w) = problem.table.clf() {
        write_quadratic_csv(&dir.join(format!("{}_H{}_clf.csv", problem.env.name, h)), w)?;
    }
    Ok(SolveSummary {
        env: problem.env.name,
        h,
        cost_kind: kind_str,
        gamma,
        sweeps: v.meta.sweep_count,
        bellman_residual: v.meta.bellman_residual,
        origin_value: v.values[problem.table.grid().origin_index()],
    })
}

/// Solves one cell and writes the greedy rollout from `x0` to `path` as CSV.
pub fn rollout_cell(
    cfg: &ExperimentConfig,
    h: f64,
    kind: KindName,
    gamma: f64,
    x0: &[f64],
    path: &Path,
    force: bool,
) -> Result<usize> {
    if path.exists() && !force {
        return Err(CliError::Exists(path.to_path_buf()));
    }
    let (problem, _, pi) = solve_cell(cfg, h, kind, gamma)?;
    let controller = pi.controller(problem.table.grid(), problem.table.inputs());
    let steps = cfg.protocol().horizon_steps(problem.env.dt);
    let running = cfg.running_cost();
    let trace = rollout(&problem.env, &controller, x0, steps, Some(&running))?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let n = problem.env.state_dim();
    let m = problem.env.input_dim();
    let mut header = vec!["k".to_string()];
    header.extend((0..n).map(|d| format!("x{d}")));
    header.extend((0..m).map(|d| format!("u{d}")));
    header.push("running_cost".into());
    w.write_record(&header)?;
    for (k, x) in trace.states.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(x.iter().map(|&v| fmt_f64(v)));
        match trace.inputs.get(k) {
            Some(u) => {
                rec.extend(u.iter().map(|&v| fmt_f64(v)));
                rec.push(
                    trace
                        .running_costs
                        .get(k)
                        .map(|&c| fmt_f64(c))
                        .unwrap_or_default(),
                );
            }
            None => rec.extend(std::iter::repeat_n(String::new(), m + 1)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(trace.states.len() - 1)
}

/// CLF checks for one input bound.
#[derive(Debug, Clone, Serialize)]
pub struct ClfReport {
    /// Environment name.
    pub env: &'static str,
    /// Input bound.
    pub h: f64,
    /// `min_u ΔW < 0` at every node outside the exclusion ball.
    pub is_clf_on_grid: bool,
    /// Largest best-case `ΔW`.
    pub worst_decrease: f64,
    /// Node attaining it.
    pub worst_decrease_point: Vec<f64>,
    /// Share of checked nodes without a decreasing input.
    pub fraction_violating: f64,
    /// `min_u [ΔW + ℓ] ≤ 0` at every node.
    pub cost_bound_holds: bool,
    /// Largest `min_u [ΔW + ℓ]`.
    pub cost_bound_worst_margin: f64,
    /// Node attaining it.
    pub cost_bound_worst_point: Vec<f64>,
}

/// Checks the configured CLF at every input bound.
pub fn verify_clf(cfg: &ExperimentConfig) -> Result<Vec<ClfReport>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for h in cfg.input_bounds() {
        let env = cfg.environment(h)?;
        let grid = cfg.grid(&env)?;
        let inputs = cfg.input_set(&env)?;
        let w = cfg.clf(&env)?;
        let clf = verify_clf_on_grid(&w, &env, &grid, &inputs, cfg.analysis.exclusion_radius);
        let bound = check_lemma1_condition(&w, &env, &grid, &inputs, &cfg.running_cost());
        out.push(ClfReport {
            env: env.name,
            h,
            is_clf_on_grid: clf.is_clf_on_grid,
            worst_decrease: clf.worst_decrease,
            worst_decrease_point: clf.worst_point,
            fraction_violating: clf.fraction_violating,
            cost_bound_holds: bound.holds,
            cost_bound_worst_margin: bound.worst_margin,
            cost_bound_worst_point: bound.worst_point,
        });
    }
    Ok(out)
}
