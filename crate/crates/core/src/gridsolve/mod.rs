//! Grid discretization, multilinear interpolation and dynamic programming
//! for the standard and reshaped costs.

mod grid;
mod inputs;
mod policy;
mod solve;
mod table;

pub use grid::{interpolate, GridSpec, Stencil, MAX_GRID_DIM};
pub use inputs::InputSet;
pub use policy::{FieldMeta, GapField, TabularController, TabularPolicy, ValueField};
pub use solve::{
    bellman_sweep, finite_horizon_value, make_suboptimal, optimality_gap, policy_evaluation,
    value_iteration, Terminal, DIVERGENCE_THRESHOLD, POLICY_EVAL_MAX_SWEEPS,
};
pub use table::{BackupTable, DEFAULT_ESCAPE_PENALTY};

use alloc::vec::Vec;

/// Evaluates `f` at every node index, in parallel when enabled; the output
/// order is the node order either way.
pub(crate) fn map_nodes<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Fills `out[i] = f(i)` over node-aligned chunks.
pub(crate) fn fill_nodes<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        const CHUNK: usize = 256;
        out.par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    f(c * CHUNK + k, slot);
                }
            });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, slot) in out.iter_mut().enumerate() {
            f(i, slot);
        }
    }
}
