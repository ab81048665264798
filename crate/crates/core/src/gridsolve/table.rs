use alloc::vec;
use alloc::vec::Vec;

use super::grid::GridSpec;
use super::inputs::InputSet;
use super::map_nodes;
use crate::costs::{CostKind, RunningCost};
use crate::dynamics::Environment;
use crate::error::{Error, Result};
use crate::quadratics::QuadraticForm;

/// Added to the continuation value of a successor that leaves the grid box.
pub const DEFAULT_ESCAPE_PENALTY: f64 = 1e3;

/// Precomputed transitions for every (node, input) pair: running cost,
/// `W` at the successor, the successor's interpolation stencil and whether
/// it escaped the box.
///
/// Both cost kinds and every discount factor reuse one table.
#[derive(Debug, Clone)]
pub struct BackupTable {
    grid: GridSpec,
    inputs: InputSet,
    running: RunningCost,
    w: Option<QuadraticForm>,
    escape_penalty: f64,
    corners_per: usize,
    ell: Vec<f64>,
    w_next: Vec<f64>,
    w_node: Vec<f64>,
    corner: Vec<u32>,
    weight: Vec<f64>,
    escaped: Vec<bool>,
}

struct NodeRow {
    ell: Vec<f64>,
    w_next: Vec<f64>,
    corner: Vec<u32>,
    weight: Vec<f64>,
    escaped: Vec<bool>,
}

impl BackupTable {
    /// Enumerates `F(x, u)` over all nodes and inputs.
    ///
    /// `w` is the shaping CLF; without it the shaped cost equals the
    /// standard one.
    pub fn build(
        env: &Environment,
        grid: &GridSpec,
        inputs: &InputSet,
        running: &RunningCost,
        w: Option<&QuadraticForm>,
        escape_penalty: f64,
    ) -> Result<Self> {
        let n = env.state_dim();
        if grid.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: grid.dim(),
            });
        }
        if inputs.dim() != env.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: env.input_dim(),
                got: inputs.dim(),
            });
        }
        if running.q.dim() != n || running.r.dim() != env.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: running.q.dim(),
            });
        }
        if let Some(w) = w {
            if w.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: w.dim(),
                });
            }
        }
        if !(escape_penalty >= 0.0 && escape_penalty.is_finite()) {
            return Err(Error::InvalidArgument(
                "escape penalty must be finite and nonnegative".into(),
            ));
        }
        for j in 0..inputs.len() {
            env.check_input(inputs.input(j))?;
        }
        let corners_per = 1usize << n;
        let m = inputs.len();
        let rows = map_nodes(grid.node_count(), |idx| {
            let x = grid.node_coords(idx);
            let mut next = vec![0.0; n];
            let mut row = NodeRow {
                ell: Vec::with_capacity(m),
                w_next: Vec::with_capacity(m),
                corner: vec![0; m * corners_per],
                weight: vec![0.0; m * corners_per],
                escaped: Vec::with_capacity(m),
            };
            for j in 0..m {
                let u = inputs.input(j);
                env.step_unchecked(&x, u, &mut next);
                row.ell.push(running.eval(&x, u));
                row.w_next.push(w.map_or(0.0, |w| w.eval(&next)));
                let st = grid.stencil(&next);
                for (k, (c, wt)) in st.iter().enumerate() {
                    row.corner[j * corners_per + k] = c as u32;
                    row.weight[j * corners_per + k] = wt;
                }
                row.escaped.push(st.clamped);
            }
            row
        });
        let total = grid.node_count() * m;
        let mut t = BackupTable {
            grid: grid.clone(),
            inputs: inputs.clone(),
            running: running.clone(),
            w: w.cloned(),
            escape_penalty,
            corners_per,
            ell: Vec::with_capacity(total),
            w_next: Vec::with_capacity(total),
            w_node: grid.sample(|x| w.map_or(0.0, |w| w.eval(x))),
            corner: Vec::with_capacity(total * corners_per),
            weight: Vec::with_capacity(total * corners_per),
            escaped: Vec::with_capacity(total),
        };
        for row in rows {
            t.ell.extend(row.ell);
            t.w_next.extend(row.w_next);
            t.corner.extend(row.corner);
            t.weight.extend(row.weight);
            t.escaped.extend(row.escaped);
        }
        Ok(t)
    }

    /// The grid.
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// The input set.
    pub fn inputs(&self) -> &InputSet {
        &self.inputs
    }

    /// The running cost `ℓ`.
    pub fn running(&self) -> &RunningCost {
        &self.running
    }

    /// The shaping CLF, if any.
    pub fn clf(&self) -> Option<&QuadraticForm> {
        self.w.as_ref()
    }

    /// Penalty added to escaping continuations.
    pub fn escape_penalty(&self) -> f64 {
        self.escape_penalty
    }

    /// Number of grid nodes.
    pub fn node_count(&self) -> usize {
        self.grid.node_count()
    }

    /// Number of inputs.
    pub fn input_count(&self) -> usize {
        self.inputs.len()
    }

    #[inline]
    fn entry(&self, node: usize, j: usize) -> usize {
        node * self.inputs.len() + j
    }

    /// `ℓ(x, u_j)` at node `node`.
    #[inline]
    pub fn running_cost(&self, node: usize, j: usize) -> f64 {
        self.ell[self.entry(node, j)]
    }

    /// `W(F(x, u_j)) − W(x)`, or 0 without a CLF.
    #[inline]
    pub fn delta_w(&self, node: usize, j: usize) -> f64 {
        self.w_next[self.entry(node, j)] - self.w_node[node]
    }

    /// `W(F(x, u_j))`, or 0 without a CLF.
    #[inline]
    pub fn w_next(&self, node: usize, j: usize) -> f64 {
        self.w_next[self.entry(node, j)]
    }

    /// `W` sampled at the nodes (zeros without a CLF).
    pub fn w_nodes(&self) -> &[f64] {
        &self.w_node
    }

    /// Per-step cost of the given kind.
    #[inline]
    pub fn stage_cost(&self, kind: CostKind, node: usize, j: usize) -> f64 {
        match kind {
            CostKind::Standard => self.running_cost(node, j),
            CostKind::Shaped => self.delta_w(node, j) + self.running_cost(node, j),
        }
    }

    /// Whether the successor of `(node, u_j)` left the box.
    #[inline]
    pub fn escaped(&self, node: usize, j: usize) -> bool {
        self.escaped[self.entry(node, j)]
    }

    /// Successor corners and weights of `(node, u_j)`.
    pub fn successor(&self, node: usize, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let base = self.entry(node, j) * self.corners_per;
        let len = self.corners_per;
        self.corner[base..base + len]
            .iter()
            .zip(&self.weight[base..base + len])
            .filter(|(_, &w)| w != 0.0)
            .map(|(&c, &w)| (c as usize, w))
    }

    /// Interpolated `values` at the successor plus the escape penalty.
    #[inline]
    pub fn continuation(&self, node: usize, j: usize, values: &[f64]) -> f64 {
        let e = self.entry(node, j);
        let base = e * self.corners_per;
        let mut acc = 0.0;
        for k in 0..self.corners_per {
            let w = self.weight[base + k];
            if w != 0.0 {
                acc += w * values[self.corner[base + k] as usize];
            }
        }
        if self.escaped[e] {
            acc += self.escape_penalty;
        }
        acc
    }

    /// Bellman right-hand side `c(x, u_j) + γ·cont(V)`.
    #[inline]
    pub fn q_value(
        &self,
        kind: CostKind,
        gamma: f64,
        node: usize,
        j: usize,
        values: &[f64],
    ) -> f64 {
        self.stage_cost(kind, node, j) + gamma * self.continuation(node, j, values)
    }
}
