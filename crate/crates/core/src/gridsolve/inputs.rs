use alloc::vec::Vec;

use crate::dynamics::Environment;
use crate::error::{Error, Result};

/// Finite input set, uniform over the input box with an odd count per
/// dimension, so that `0` is a member.
///
/// Ties in an argmin are broken by smallest Euclidean norm, then lowest
/// index; [`InputSet::tie_order`] lists indices in that priority.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSet {
    dim: usize,
    values: Vec<f64>,
    order: Vec<usize>,
    zero: usize,
}

impl InputSet {
    /// Uniform tensor grid over `input_box` with `counts[d]` samples in
    /// dimension `d`.
    pub fn uniform(input_box: &[(f64, f64)], counts: &[usize]) -> Result<Self> {
        let dim = input_box.len();
        if counts.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: counts.len(),
            });
        }
        let mut axes = Vec::with_capacity(dim);
        for (&(lo, hi), &n) in input_box.iter().zip(counts) {
            if n == 0 || n % 2 == 0 {
                return Err(Error::InvalidArgument("input counts must be odd".into()));
            }
            if !(hi.is_finite() && lo.is_finite() && hi >= 0.0 && lo <= 0.0)
                || (lo + hi).abs() > 1e-12 * hi.max(1.0)
            {
                return Err(Error::InvalidArgument(
                    "input box must be finite and symmetric".into(),
                ));
            }
            let mid = (n - 1) / 2;
            let axis: Vec<f64> = if mid == 0 {
                alloc::vec![0.0]
            } else {
                let h = hi / mid as f64;
                (0..n)
                    .map(|i| match i {
                        0 => lo,
                        i if i == n - 1 => hi,
                        i if i == mid => 0.0,
                        i => (i as f64 - mid as f64) * h,
                    })
                    .collect()
            };
            axes.push(axis);
        }
        let total: usize = counts.iter().product();
        let mut values = Vec::with_capacity(total * dim);
        for j in 0..total {
            let mut rem = j;
            let mut point = alloc::vec![0.0; dim];
            for d in (0..dim).rev() {
                point[d] = axes[d][rem % counts[d]];
                rem /= counts[d];
            }
            values.extend_from_slice(&point);
        }
        Self::from_points(dim, values)
    }

    /// Uniform set over an environment's input box, `per_dim` samples each.
    pub fn for_env(env: &Environment, per_dim: usize) -> Result<Self> {
        let counts = alloc::vec![per_dim; env.input_dim()];
        Self::uniform(&env.input_box, &counts)
    }

    /// Arbitrary point list (row-major, `dim` entries per point) that must
    /// contain the zero input.
    pub fn from_points(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return Err(Error::InvalidArgument(
                "input points must be a nonempty multiple of dim".into(),
            ));
        }
        let n = values.len() / dim;
        let norm2 = |j: usize| {
            values[j * dim..(j + 1) * dim]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
        };
        let zero = (0..n)
            .find(|&j| norm2(j) == 0.0)
            .ok_or_else(|| Error::InvalidArgument("input set must contain 0".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| norm2(a).total_cmp(&norm2(b)).then(a.cmp(&b)));
        Ok(InputSet {
            dim,
            values,
            order,
            zero,
        })
    }

    /// Number of inputs.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    /// Whether the set is empty (never, once constructed).
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Input dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Input `j`.
    pub fn input(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// Indices in tie-break priority.
    pub fn tie_order(&self) -> &[usize] {
        &self.order
    }

    /// Index of the zero input.
    pub fn zero_index(&self) -> usize {
        self.zero
    }

    /// Index of the member nearest to `u` (ties by tie-break priority).
    pub fn nearest(&self, u: &[f64]) -> usize {
        let mut best = (f64::INFINITY, self.zero);
        for &j in &self.order {
            let d: f64 = self
                .input(j)
                .iter()
                .zip(u)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best.0 {
                best = (d, j);
            }
        }
        best.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_contains_zero_and_bounds() {
        let s = InputSet::uniform(&[(-4.0, 4.0)], &[41]).unwrap();
        assert_eq!(s.len(), 41);
        assert_eq!(s.input(s.zero_index()), &[0.0]);
        assert_eq!(s.input(0), &[-4.0]);
        assert_eq!(s.input(40), &[4.0]);
        assert_eq!(s.tie_order()[0], s.zero_index());
        // Equal norms resolve to the lower index.
        assert_eq!(s.input(s.tie_order()[1]), &[-0.2]);
    }

    #[test]
    fn rejects_even_count() {
        assert!(InputSet::uniform(&[(-1.0, 1.0)], &[4]).is_err());
    }

    #[test]
    fn two_dim_product() {
        let s = InputSet::uniform(&[(-1.0, 1.0), (-2.0, 2.0)], &[3, 5]).unwrap();
        assert_eq!(s.len(), 15);
        assert_eq!(s.input(s.zero_index()), &[0.0, 0.0]);
    }
}
