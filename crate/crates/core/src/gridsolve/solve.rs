use alloc::vec;
use alloc::vec::Vec;

use super::policy::{FieldMeta, GapField, TabularPolicy, ValueField};
use super::table::BackupTable;
use super::{fill_nodes, map_nodes};
use crate::costs::CostKind;
use crate::error::{Error, Result};

/// Values beyond this magnitude mark a policy evaluation as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Sweep cap for [`policy_evaluation`].
pub const POLICY_EVAL_MAX_SWEEPS: usize = 1_000_000;

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn check_gamma(gamma: f64, allow_one: bool) -> Result<()> {
    let ok = if allow_one {
        (0.0..=1.0).contains(&gamma)
    } else {
        (0.0..1.0).contains(&gamma)
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "discount factor out of range".into(),
        ))
    }
}

/// Greedy minimizer of `q(j)` scanning inputs in tie-break priority.
#[inline]
fn argmin_by<F: Fn(usize) -> f64>(order: &[usize], q: F) -> (f64, usize) {
    let mut best = (f64::INFINITY, order[0]);
    for &j in order {
        let v = q(j);
        if v < best.0 {
            best = (v, j);
        }
    }
    best
}

/// One Jacobi sweep `out = T[values]`, with the greedy input per node.
pub fn bellman_sweep(
    table: &BackupTable,
    kind: CostKind,
    gamma: f64,
    values: &[f64],
    out: &mut [f64],
    policy: &mut [u32],
) {
    let order = table.inputs().tie_order();
    let mut pairs = vec![(0.0f64, 0u32); table.node_count()];
    fill_nodes(&mut pairs, |node, slot| {
        let (v, j) = argmin_by(order, |j| table.q_value(kind, gamma, node, j, values));
        *slot = (v, j as u32);
    });
    for ((o, p), (v, j)) in out.iter_mut().zip(policy.iter_mut()).zip(pairs) {
        *o = v;
        *p = j;
    }
}

/// Infinite-horizon value iteration by Jacobi sweeps from `V = 0` until the
/// sup-norm change drops below `tol`.
///
/// The returned policy is greedy with respect to the returned field, and the
/// recorded residual comes from one further independent sweep.
pub fn value_iteration(
    table: &BackupTable,
    kind: CostKind,
    gamma: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<(ValueField, TabularPolicy)> {
    check_gamma(gamma, false)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let n = table.node_count();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut pol = vec![0u32; n];
    let mut diff = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        bellman_sweep(table, kind, gamma, &v, &mut next, &mut pol);
        diff = sup_diff(&v, &next);
        core::mem::swap(&mut v, &mut next);
        if diff < tol {
            bellman_sweep(table, kind, gamma, &v, &mut next, &mut pol);
            let residual = sup_diff(&v, &next);
            let meta = FieldMeta {
                cost_kind: kind,
                gamma,
                bellman_residual: residual,
                sweep_count: sweep,
            };
            return Ok((
                ValueField { values: v, meta },
                TabularPolicy { indices: pol },
            ));
        }
        if !diff.is_finite() {
            break;
        }
    }
    Err(Error::NotConverged {
        sweeps: max_sweeps,
        residual: diff,
    })
}

/// Terminal cost of a finite-horizon problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Terminal {
    /// The table's CLF `W`.
    Clf,
    /// Zero terminal cost.
    Zero,
}

/// Backward induction `V₀ = terminal`, `V_{j+1} = T₁[V_j]` (undiscounted) and
/// the first-step greedy policy of the `N`-step problem.
///
/// The first backup uses `W(F(x,u))` exactly rather than interpolated. For
/// `N = 0` the policy is greedy on `ℓ + W(F) − W(x)`, which is the one-step
/// shaped controller (and `u = 0` with a zero terminal).
pub fn finite_horizon_value(
    table: &BackupTable,
    terminal: Terminal,
    horizon: usize,
) -> Result<(ValueField, TabularPolicy)> {
    if terminal == Terminal::Clf && table.clf().is_none() {
        return Err(Error::InvalidArgument(
            "CLF terminal cost needs a table built with W".into(),
        ));
    }
    let n = table.node_count();
    let order = table.inputs().tie_order();
    let use_w = terminal == Terminal::Clf;
    let mut v: Vec<f64> = if use_w {
        table.w_nodes().to_vec()
    } else {
        vec![0.0; n]
    };
    let meta = |residual: f64, steps: usize| FieldMeta {
        cost_kind: if use_w {
            CostKind::Shaped
        } else {
            CostKind::Standard
        },
        gamma: 1.0,
        bellman_residual: residual,
        sweep_count: steps,
    };
    if horizon == 0 {
        let kind = if use_w {
            CostKind::Shaped
        } else {
            CostKind::Standard
        };
        let indices = map_nodes(n, |node| {
            argmin_by(order, |j| table.stage_cost(kind, node, j)).1 as u32
        });
        return Ok((
            ValueField {
                values: v,
                meta: meta(0.0, 0),
            },
            TabularPolicy { indices },
        ));
    }
    let first = map_nodes(n, |node| {
        let (val, j) = argmin_by(order, |j| {
            let tail = if use_w { table.w_next(node, j) } else { 0.0 };
            let pen = if table.escaped(node, j) {
                table.escape_penalty()
            } else {
                0.0
            };
            table.running_cost(node, j) + (tail + pen)
        });
        (val, j as u32)
    });
    let mut pol: Vec<u32> = first.iter().map(|p| p.1).collect();
    let mut next: Vec<f64> = first.iter().map(|p| p.0).collect();
    let mut last_change = sup_diff(&v, &next);
    core::mem::swap(&mut v, &mut next);
    for _ in 1..horizon {
        bellman_sweep(table, CostKind::Standard, 1.0, &v, &mut next, &mut pol);
        last_change = sup_diff(&v, &next);
        core::mem::swap(&mut v, &mut next);
    }
    Ok((
        ValueField {
            values: v,
            meta: meta(last_change, horizon),
        },
        TabularPolicy { indices: pol },
    ))
}

/// Whether the closed-loop grid chain is absorbed at the origin with
/// probability one: the origin must be a fixed point with zero stage cost and
/// every node must reach it along transitions of positive weight.
fn absorbs_at_origin(table: &BackupTable, kind: CostKind, policy: &TabularPolicy) -> bool {
    let n = table.node_count();
    let origin = table.grid().origin_index();
    let j0 = policy.at(origin);
    let self_loop =
        table.successor(origin, j0).all(|(c, _)| c == origin) && !table.escaped(origin, j0);
    if !self_loop || table.stage_cost(kind, origin, j0) != 0.0 {
        return false;
    }
    let mut preds: Vec<Vec<u32>> = vec![Vec::new(); n];
    for node in 0..n {
        for (c, _) in table.successor(node, policy.at(node)) {
            preds[c].push(node as u32);
        }
    }
    let mut seen = vec![false; n];
    let mut stack = vec![origin];
    seen[origin] = true;
    while let Some(c) = stack.pop() {
        for &p in &preds[c] {
            if !seen[p as usize] {
                seen[p as usize] = true;
                stack.push(p as usize);
            }
        }
    }
    seen.iter().all(|&s| s)
}

/// Fixed point of `V = c_π + γ·P_π V` on the grid chain.
///
/// `γ = 1` requires the closed-loop chain to be absorbed at the origin;
/// otherwise the policy is reported unstable before iterating.
pub fn policy_evaluation(
    table: &BackupTable,
    kind: CostKind,
    gamma: f64,
    policy: &TabularPolicy,
    tol: f64,
) -> Result<ValueField> {
    check_gamma(gamma, true)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let n = table.node_count();
    if policy.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: policy.len(),
        });
    }
    if policy
        .indices
        .iter()
        .any(|&j| j as usize >= table.input_count())
    {
        return Err(Error::InvalidArgument(
            "policy index outside the input set".into(),
        ));
    }
    if gamma == 1.0 && !absorbs_at_origin(table, kind, policy) {
        return Err(Error::PolicyUnstable { sweeps: 0 });
    }
    let cost: Vec<f64> = (0..n)
        .map(|node| table.stage_cost(kind, node, policy.at(node)))
        .collect();
    let backup = |values: &[f64], out: &mut [f64]| {
        fill_nodes(out, |node, slot| {
            *slot = cost[node] + gamma * table.continuation(node, policy.at(node), values);
        });
    };
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    for sweep in 1..=POLICY_EVAL_MAX_SWEEPS {
        backup(&v, &mut next);
        let diff = sup_diff(&v, &next);
        core::mem::swap(&mut v, &mut next);
        if v.iter().any(|x| !(x.abs() <= DIVERGENCE_THRESHOLD)) {
            return Err(Error::PolicyUnstable { sweeps: sweep });
        }
        if diff < tol {
            backup(&v, &mut next);
            let residual = sup_diff(&v, &next);
            let meta = FieldMeta {
                cost_kind: kind,
                gamma,
                bellman_residual: residual,
                sweep_count: sweep,
            };
            return Ok(ValueField { values: v, meta });
        }
    }
    Err(Error::NotConverged {
        sweeps: POLICY_EVAL_MAX_SWEEPS,
        residual: f64::NAN,
    })
}

/// `V^π − V*` per node; both fields must share cost kind, `γ` and grid.
pub fn optimality_gap(v_pi: &ValueField, v_star: &ValueField) -> Result<GapField> {
    if v_pi.values.len() != v_star.values.len() {
        return Err(Error::MetadataMismatch(
            "fields have different node counts".into(),
        ));
    }
    if v_pi.meta.cost_kind != v_star.meta.cost_kind {
        return Err(Error::MetadataMismatch(
            "fields have different cost kinds".into(),
        ));
    }
    if v_pi.meta.gamma != v_star.meta.gamma {
        return Err(Error::MetadataMismatch(
            "fields have different discount factors".into(),
        ));
    }
    let values = v_pi
        .values
        .iter()
        .zip(&v_star.values)
        .map(|(a, b)| a - b)
        .collect();
    let meta = FieldMeta {
        bellman_residual: v_pi.meta.bellman_residual.max(v_star.meta.bellman_residual),
        ..v_pi.meta
    };
    Ok(GapField { values, meta })
}

/// Picks, at every node, the `rank`-th best input by the Bellman right-hand
/// side built on `v_star` (rank 1 reproduces the greedy policy).
pub fn make_suboptimal(
    table: &BackupTable,
    kind: CostKind,
    gamma: f64,
    v_star: &ValueField,
    rank: usize,
) -> Result<TabularPolicy> {
    let m = table.input_count();
    if rank == 0 || rank > m {
        return Err(Error::RankOutOfRange { rank, size: m });
    }
    if v_star.values.len() != table.node_count() {
        return Err(Error::DimensionMismatch {
            expected: table.node_count(),
            got: v_star.values.len(),
        });
    }
    let order = table.inputs().tie_order();
    let values = &v_star.values;
    let indices = map_nodes(table.node_count(), |node| {
        if rank == 1 {
            return argmin_by(order, |j| table.q_value(kind, gamma, node, j, values)).1 as u32;
        }
        let mut scored: Vec<(f64, usize, usize)> = order
            .iter()
            .enumerate()
            .map(|(pos, &j)| (table.q_value(kind, gamma, node, j, values), pos, j))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored[rank - 1].2 as u32
    });
    Ok(TabularPolicy { indices })
}
