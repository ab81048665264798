use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::dynamics::Environment;
use crate::error::{Error, Result};
use crate::math::wrap_angle;

/// Largest supported state dimension (16 interpolation corners).
pub const MAX_GRID_DIM: usize = 4;

const MAX_CORNERS: usize = 1 << MAX_GRID_DIM;

/// Cell fractions this close to an integer snap onto the node.
const NODE_SNAP: f64 = 1e-9;

/// Rectangular grid with an odd node count per dimension, symmetric about
/// the origin so that the origin is a node.
///
/// Wrapped dimensions span `[−π, π]` and keep both end nodes; states are
/// wrapped into `[−π, π)` before lookup, so no cell straddles the seam.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    counts: Vec<usize>,
    bounds: Vec<(f64, f64)>,
    wrap: Vec<bool>,
    coords: Vec<Vec<f64>>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

/// Multilinear interpolation weights for one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    len: usize,
    corners: [u32; MAX_CORNERS],
    weights: [f64; MAX_CORNERS],
    /// The query left the box in some non-wrapped dimension and was clamped.
    pub clamped: bool,
}

impl Stencil {
    /// Node indices and weights of the nonempty corners.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.corners[..self.len]
            .iter()
            .zip(&self.weights[..self.len])
            .map(|(&c, &w)| (c as usize, w))
    }

    /// `Σ wᵢ·values[cᵢ]`.
    pub fn apply(&self, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.len {
            acc += self.weights[k] * values[self.corners[k] as usize];
        }
        acc
    }

    /// Number of corners.
    pub fn len(&self) -> usize {
        self.len
    }

    /// Whether the stencil has no corners.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl GridSpec {
    /// Builds a grid from odd node counts, symmetric bounds and wrap flags.
    pub fn new(counts: Vec<usize>, bounds: Vec<(f64, f64)>, wrap: Vec<bool>) -> Result<Self> {
        let dim = counts.len();
        if dim == 0 || dim > MAX_GRID_DIM {
            return Err(Error::InvalidArgument(
                "grid dimension must be between 1 and 4".into(),
            ));
        }
        if bounds.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bounds.len(),
            });
        }
        if wrap.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: wrap.len(),
            });
        }
        let mut coords = Vec::with_capacity(dim);
        let mut spacing = Vec::with_capacity(dim);
        for d in 0..dim {
            let n = counts[d];
            let (lo, hi) = bounds[d];
            if n < 3 || n % 2 == 0 {
                return Err(Error::InvalidArgument(
                    "grid node counts must be odd and at least 3".into(),
                ));
            }
            if !(hi > 0.0 && hi.is_finite()) || (lo + hi).abs() > 1e-12 * hi {
                return Err(Error::InvalidArgument(
                    "grid bounds must be finite and symmetric about 0".into(),
                ));
            }
            if wrap[d] && ((lo + PI).abs() > 1e-12 || (hi - PI).abs() > 1e-12) {
                return Err(Error::InvalidArgument(
                    "wrapped grid dimensions must span [-pi, pi]".into(),
                ));
            }
            let mid = (n - 1) / 2;
            let h = hi / mid as f64;
            let mut c: Vec<f64> = (0..n).map(|i| (i as f64 - mid as f64) * h).collect();
            c[0] = lo;
            c[n - 1] = hi;
            c[mid] = 0.0;
            coords.push(c);
            spacing.push(h);
        }
        let mut strides = vec![1usize; dim];
        for d in (0..dim.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * counts[d + 1];
        }
        if counts
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .is_none_or(|t| t > u32::MAX as usize)
        {
            return Err(Error::InvalidArgument("grid too large".into()));
        }
        Ok(GridSpec {
            counts,
            bounds,
            wrap,
            coords,
            spacing,
            strides,
        })
    }

    /// Grid over an environment's state box with its wrap dimensions.
    pub fn for_env(env: &Environment, counts: Vec<usize>) -> Result<Self> {
        let wrap = (0..env.state_dim()).map(|d| env.is_wrapped(d)).collect();
        Self::new(counts, env.state_box.clone(), wrap)
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// Total number of nodes.
    pub fn node_count(&self) -> usize {
        self.counts.iter().product()
    }

    /// Nodes per dimension.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// `[lo, hi]` per dimension.
    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Wrap flags per dimension.
    pub fn wrap(&self) -> &[bool] {
        &self.wrap
    }

    /// Node coordinates along dimension `d`.
    pub fn axis(&self, d: usize) -> &[f64] {
        &self.coords[d]
    }

    /// Node spacing along dimension `d`.
    pub fn spacing(&self, d: usize) -> f64 {
        self.spacing[d]
    }

    /// Flat index of a multi-index (last dimension fastest).
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Multi-index of a flat index.
    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        self.strides
            .iter()
            .zip(&self.counts)
            .map(|(s, n)| (idx / s) % n)
            .collect()
    }

    /// Flat index of the origin node.
    pub fn origin_index(&self) -> usize {
        let mid: Vec<usize> = self.counts.iter().map(|n| (n - 1) / 2).collect();
        self.flat_index(&mid)
    }

    /// Coordinates of node `idx`.
    pub fn node_coords(&self, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.node_coords_into(idx, &mut out);
        out
    }

    /// [`GridSpec::node_coords`] into a caller buffer.
    pub fn node_coords_into(&self, idx: usize, out: &mut [f64]) {
        for d in 0..self.dim() {
            let i = (idx / self.strides[d]) % self.counts[d];
            out[d] = self.coords[d][i];
        }
    }

    /// Samples `f` at every node.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        (0..self.node_count())
            .map(|idx| {
                self.node_coords_into(idx, &mut x);
                f(&x)
            })
            .collect()
    }

    fn locate(&self, d: usize, x: f64) -> (usize, f64, bool) {
        let n = self.counts[d];
        let (lo, hi) = self.bounds[d];
        let mut v = x;
        let mut clamped = false;
        if self.wrap[d] {
            v = wrap_angle(v);
        } else {
            let slack = 1e-12 * (1.0 + hi.abs());
            if v < lo {
                clamped = v < lo - slack;
                v = lo;
            } else if v > hi {
                clamped = v > hi + slack;
                v = hi;
            }
        }
        let mid = ((n - 1) / 2) as f64;
        let mut t = v / self.spacing[d] + mid;
        let r = libm::round(t);
        if (t - r).abs() < NODE_SNAP {
            t = r;
        }
        let t = t.clamp(0.0, (n - 1) as f64);
        let i = (libm::floor(t) as usize).min(n - 2);
        let frac = (t - i as f64).clamp(0.0, 1.0);
        (i, frac, clamped)
    }

    /// Interpolation stencil for `x`; non-wrapped coordinates outside the
    /// box are clamped onto its face.
    pub fn stencil(&self, x: &[f64]) -> Stencil {
        let dim = self.dim();
        let mut base = 0usize;
        let mut fr = [0.0f64; MAX_GRID_DIM];
        let mut clamped = false;
        for d in 0..dim {
            let (i, f, c) = self.locate(d, x[d]);
            base += i * self.strides[d];
            fr[d] = f;
            clamped |= c;
        }
        let mut st = Stencil {
            len: 0,
            corners: [0; MAX_CORNERS],
            weights: [0.0; MAX_CORNERS],
            clamped,
        };
        for mask in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = base;
            for d in 0..dim {
                if mask & (1 << d) != 0 {
                    w *= fr[d];
                    idx += self.strides[d];
                } else {
                    w *= 1.0 - fr[d];
                }
            }
            if w != 0.0 {
                st.corners[st.len] = idx as u32;
                st.weights[st.len] = w;
                st.len += 1;
            }
        }
        st
    }

    /// Multilinear interpolation of node values at `x`.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        self.stencil(x).apply(values)
    }
}

/// Multilinear interpolation of node values at `x`, with the clamp flag.
pub fn interpolate(values: &[f64], grid: &GridSpec, x: &[f64]) -> (f64, bool) {
    let st = grid.stencil(x);
    (st.apply(values), st.clamped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2() -> GridSpec {
        GridSpec::new(vec![5, 7], vec![(-2.0, 2.0), (-PI, PI)], vec![false, true]).unwrap()
    }

    #[test]
    fn origin_is_a_node() {
        let g = grid2();
        assert_eq!(g.node_coords(g.origin_index()), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_even_or_asymmetric() {
        assert!(GridSpec::new(vec![4], vec![(-1.0, 1.0)], vec![false]).is_err());
        assert!(GridSpec::new(vec![5], vec![(-1.0, 2.0)], vec![false]).is_err());
        assert!(GridSpec::new(vec![5], vec![(-2.0, 2.0)], vec![true]).is_err());
    }

    #[test]
    fn multi_index_round_trip() {
        let g = grid2();
        for idx in 0..g.node_count() {
            assert_eq!(g.flat_index(&g.multi_index(idx)), idx);
        }
    }

    #[test]
    fn clamps_and_flags_outside_box() {
        let g = grid2();
        let v = g.sample(|x| x[0]);
        let (val, clamped) = interpolate(&v, &g, &[3.0, 0.0]);
        assert!(clamped);
        assert_eq!(val, 2.0);
        let (_, clamped) = interpolate(&v, &g, &[1.0, 4.0]);
        assert!(!clamped, "wrapped dimension never clamps");
    }

    #[test]
    fn wrapped_lookup_uses_wrapped_angle() {
        let g = grid2();
        let v = g.sample(|x| x[1]);
        let a = g.interpolate(&v, &[0.0, 0.5]);
        let b = g.interpolate(&v, &[0.0, 0.5 + 2.0 * PI]);
        assert!((a - b).abs() < 1e-12);
        assert!((a - 0.5).abs() < 1e-12);
    }
}
