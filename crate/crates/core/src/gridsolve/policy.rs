use alloc::vec::Vec;

use super::grid::GridSpec;
use super::inputs::InputSet;
use crate::costs::CostKind;
use crate::dynamics::Controller;

/// Provenance of a [`ValueField`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldMeta {
    /// Cost the field was computed for.
    pub cost_kind: CostKind,
    /// Discount factor (1 for finite-horizon fields).
    pub gamma: f64,
    /// Sup-norm Bellman residual of the stored values.
    pub bellman_residual: f64,
    /// Sweeps (or backward steps) performed.
    pub sweep_count: usize,
}

/// One value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    /// Node values in grid order.
    pub values: Vec<f64>,
    /// Provenance.
    pub meta: FieldMeta,
}

impl ValueField {
    /// Interpolated value at `x`.
    pub fn interpolate(&self, grid: &GridSpec, x: &[f64]) -> f64 {
        grid.interpolate(&self.values, x)
    }
}

/// Per-node index into an [`InputSet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabularPolicy {
    /// Input index for every node in grid order.
    pub indices: Vec<u32>,
}

impl TabularPolicy {
    /// Input index at node `idx`.
    pub fn at(&self, idx: usize) -> usize {
        self.indices[idx] as usize
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    /// Whether the policy covers no nodes.
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Continuous-state controller interpolating this policy on `grid`.
    pub fn controller<'a>(
        &'a self,
        grid: &'a GridSpec,
        inputs: &'a InputSet,
    ) -> TabularController<'a> {
        TabularController {
            grid,
            inputs,
            policy: self,
        }
    }
}

/// Optimality gap `V^π − V*` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct GapField {
    /// Node gaps in grid order.
    pub values: Vec<f64>,
    /// Metadata shared by the two operands.
    pub meta: FieldMeta,
}

/// Tabular policy applied off-grid by multilinear interpolation of the node
/// input vectors, with the query clamped to the grid box.
#[derive(Debug, Clone, Copy)]
pub struct TabularController<'a> {
    /// Grid the policy lives on.
    pub grid: &'a GridSpec,
    /// Inputs the indices refer to.
    pub inputs: &'a InputSet,
    /// Node choices.
    pub policy: &'a TabularPolicy,
}

impl Controller for TabularController<'_> {
    fn input(&self, x: &[f64], u: &mut [f64]) {
        u.iter_mut().for_each(|v| *v = 0.0);
        for (node, w) in self.grid.stencil(x).iter() {
            let ui = self.inputs.input(self.policy.at(node));
            for (acc, v) in u.iter_mut().zip(ui) {
                *acc += w * v;
            }
        }
    }
}
