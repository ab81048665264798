//! Quadratic forms, the discounted Riccati iteration and CLF checks on grids.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::costs::RunningCost;
use crate::dynamics::{linearize, Environment};
use crate::error::{Error, Result};
use crate::gridsolve::{map_nodes, GridSpec, InputSet};
use crate::math::norm2;

/// Eigenvalue threshold for positive definiteness.
pub const PD_TOLERANCE: f64 = 1e-10;

/// Stopping threshold on `‖P_{k+1} − P_k‖∞`.
pub const DARE_TOLERANCE: f64 = 1e-12;

/// Iteration cap for the Riccati recursion.
pub const DARE_MAX_ITERATIONS: usize = 100_000;

/// Slack under which a Lemma-1 margin still counts as nonpositive.
pub const LEMMA1_SLACK: f64 = 1e-9;

/// `x ↦ xᵀ P x` with `P` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    p: DMatrix<f64>,
}

impl QuadraticForm {
    /// Symmetrizes `p` as `(P + Pᵀ)/2`.
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if !p.is_square() {
            return Err(Error::DimensionMismatch {
                expected: p.nrows(),
                got: p.ncols(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "quadratic form has non-finite entries".into(),
            ));
        }
        let sym = (&p + p.transpose()) * 0.5;
        Ok(QuadraticForm { p: sym })
    }

    /// Like [`QuadraticForm::new`] but also requires `P ≻ 0`.
    pub fn positive_definite(p: DMatrix<f64>) -> Result<Self> {
        let q = Self::new(p)?;
        let min_eigenvalue = q.min_eigenvalue();
        if min_eigenvalue > PD_TOLERANCE {
            Ok(q)
        } else {
            Err(Error::NotPositiveDefinite { min_eigenvalue })
        }
    }

    /// `P = I`.
    pub fn identity(n: usize) -> Self {
        QuadraticForm {
            p: DMatrix::identity(n, n),
        }
    }

    /// `P = 0`.
    pub fn zero(n: usize) -> Self {
        QuadraticForm {
            p: DMatrix::zeros(n, n),
        }
    }

    /// `P = diag(d)`.
    pub fn diagonal(d: &[f64]) -> Self {
        QuadraticForm {
            p: DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
        }
    }

    /// The symmetric matrix `P`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Dimension of the argument.
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// `xᵀ P x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.p[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// `c·P`.
    pub fn scaled(&self, c: f64) -> Self {
        QuadraticForm { p: &self.p * c }
    }

    /// Smallest eigenvalue of `P`.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return f64::INFINITY;
        }
        SymmetricEigen::new(self.p.clone()).eigenvalues.min()
    }

    /// Largest eigenvalue of `P`.
    pub fn max_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return f64::NEG_INFINITY;
        }
        SymmetricEigen::new(self.p.clone()).eigenvalues.max()
    }

    /// All eigenvalues above [`PD_TOLERANCE`].
    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue() > PD_TOLERANCE
    }
}

/// Fixed point of the discounted Riccati recursion and its gain.
#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    /// Value matrix, `V(x) = xᵀ P x`.
    pub p: QuadraticForm,
    /// Optimal gain, `u = −K x`.
    pub k: DMatrix<f64>,
    /// Iterations used.
    pub iterations: usize,
}

fn dare_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    qm: &DMatrix<f64>,
    rm: &DMatrix<f64>,
    gamma: f64,
    p: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let at = a.transpose();
    let bt = b.transpose();
    let pa = p * a;
    let pb = p * b;
    let s = rm + (&bt * &pb) * gamma;
    let s_inv = s.try_inverse()?;
    let k = &s_inv * (&bt * &pa) * gamma;
    let next = qm + (&at * &pa) * gamma - (&at * &pb) * (&k * gamma);
    Some((next, k))
}

/// Solves `P = Qm + γAᵀPA − γ²AᵀPB(Rm + γBᵀPB)⁻¹BᵀPA` by fixed-point
/// iteration from `P₀ = Qm`, with gain `K = γ(Rm + γBᵀPB)⁻¹BᵀPA`.
pub fn solve_dare_discounted(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    qm: &DMatrix<f64>,
    rm: &DMatrix<f64>,
    gamma: f64,
) -> Result<DareSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.nrows(),
        });
    }
    if qm.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: qm.nrows(),
        });
    }
    if rm.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: rm.nrows(),
        });
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument("gamma must lie in [0, 1]".into()));
    }
    let mut p = (qm + qm.transpose()) * 0.5;
    for it in 1..=DARE_MAX_ITERATIONS {
        let (next, _) =
            dare_map(a, b, qm, rm, gamma, &p).ok_or(Error::DareDiverged { iterations: it })?;
        let next = (&next + next.transpose()) * 0.5;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::DareDiverged { iterations: it });
        }
        let change = (&next - &p).amax();
        let tol = DARE_TOLERANCE * next.amax().max(1.0);
        p = next;
        if change < tol {
            let (_, k) =
                dare_map(a, b, qm, rm, gamma, &p).ok_or(Error::DareDiverged { iterations: it })?;
            return Ok(DareSolution {
                p: QuadraticForm { p },
                k,
                iterations: it,
            });
        }
    }
    Err(Error::DareDiverged {
        iterations: DARE_MAX_ITERATIONS,
    })
}

/// `‖P − (Qm + γAᵀPA − γ²AᵀPB(Rm+γBᵀPB)⁻¹BᵀPA)‖∞`.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    qm: &DMatrix<f64>,
    rm: &DMatrix<f64>,
    gamma: f64,
    p: &DMatrix<f64>,
) -> f64 {
    match dare_map(a, b, qm, rm, gamma, p) {
        Some((next, _)) => (&next - p).amax(),
        None => f64::INFINITY,
    }
}

/// CLF candidate `W(x) = xᵀPx` from the Riccati solution on the origin
/// linearization. Input bounds are ignored.
pub fn synthesize_clf(
    env: &Environment,
    qm: &DMatrix<f64>,
    rm: &DMatrix<f64>,
    gamma_design: f64,
) -> Result<QuadraticForm> {
    Ok(synthesize_clf_with_gain(env, qm, rm, gamma_design)?.p)
}

/// [`synthesize_clf`] also returning the linear gain.
pub fn synthesize_clf_with_gain(
    env: &Environment,
    qm: &DMatrix<f64>,
    rm: &DMatrix<f64>,
    gamma_design: f64,
) -> Result<DareSolution> {
    let lin = linearize(env);
    let sol = solve_dare_discounted(&lin.a, &lin.b, qm, rm, gamma_design)?;
    let min_eigenvalue = sol.p.min_eigenvalue();
    if min_eigenvalue <= PD_TOLERANCE {
        return Err(Error::NotPositiveDefinite { min_eigenvalue });
    }
    Ok(sol)
}

/// Grid verdict on the CLF decrease condition `min_u W(F(x,u)) − W(x) < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClfVerdict {
    /// No checked node violates the strict decrease.
    pub is_clf_on_grid: bool,
    /// Node with the largest best-case change of `W`.
    pub worst_point: Vec<f64>,
    /// Best-case change of `W` at `worst_point`.
    pub worst_decrease: f64,
    /// Share of checked nodes where no input decreases `W`.
    pub fraction_violating: f64,
}

/// Exact minimizer of `uᵀHu + 2gᵀu` over a box by coordinate descent.
/// One pass is exact for scalar inputs.
fn box_qp_argmin(h: &[f64], g: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    let m = g.len();
    let mut u = vec![0.0; m];
    let passes = if m == 1 { 1 } else { 200 };
    for _ in 0..passes {
        let mut moved = 0.0f64;
        for j in 0..m {
            let hjj = h[j * m + j];
            if hjj <= 0.0 {
                continue;
            }
            let mut lin = g[j];
            for k in 0..m {
                if k != j {
                    lin += h[j * m + k] * u[k];
                }
            }
            let uj = (-lin / hjj).clamp(bounds[j].0, bounds[j].1);
            moved = moved.max((uj - u[j]).abs());
            u[j] = uj;
        }
        if moved < 1e-15 {
            break;
        }
    }
    u
}

/// `min_u [W(F(x,u)) − W(x) + extra(x,u)]` over the sampled set and the exact
/// box minimizer of the control-affine quadratic, with `R` optional.
fn best_decrease(
    w: &QuadraticForm,
    env: &Environment,
    inputs: &InputSet,
    r: Option<&QuadraticForm>,
    x: &[f64],
) -> f64 {
    let n = env.state_dim();
    let m = env.input_dim();
    let wx = w.eval(x);
    let mut next = vec![0.0; n];
    let objective = |u: &[f64], next: &mut [f64]| {
        env.step_unchecked(x, u, next);
        let mut v = w.eval(next) - wx;
        if let Some(r) = r {
            v += r.eval(u);
        }
        v
    };
    let mut best = f64::INFINITY;
    for j in 0..inputs.len() {
        best = best.min(objective(inputs.input(j), &mut next));
    }
    let (f0, g) = env.affine_split(x);
    let p = w.matrix();
    let mut pg = vec![0.0; n * m];
    for j in 0..m {
        for i in 0..n {
            pg[j * n + i] = (0..n).map(|k| p[(i, k)] * g[j * n + k]).sum();
        }
    }
    let mut hess = vec![0.0; m * m];
    let mut lin = vec![0.0; m];
    for j in 0..m {
        lin[j] = (0..n).map(|i| f0[i] * pg[j * n + i]).sum();
        for k in 0..m {
            hess[j * m + k] = (0..n).map(|i| g[j * n + i] * pg[k * n + i]).sum();
            if let Some(r) = r {
                hess[j * m + k] += r.matrix()[(j, k)];
            }
        }
    }
    let u_star = box_qp_argmin(&hess, &lin, &env.input_box);
    if u_star.iter().all(|v| v.is_finite()) {
        best = best.min(objective(&u_star, &mut next));
    }
    best
}

/// Best-case `ΔW` at a single state (sampled set plus exact box minimizer).
pub fn clf_decrease_at(w: &QuadraticForm, env: &Environment, inputs: &InputSet, x: &[f64]) -> f64 {
    best_decrease(w, env, inputs, None, x)
}

/// `inf_u [ΔW(x,u) + ℓ(x,u)]` at a single state.
pub fn lemma1_margin_at(
    w: &QuadraticForm,
    env: &Environment,
    inputs: &InputSet,
    running: &RunningCost,
    x: &[f64],
) -> f64 {
    best_decrease(w, env, inputs, Some(&running.r), x) + running.q.eval(x)
}

/// Checks `min_u ΔW(x,u) < 0` at every grid node outside the exclusion ball.
///
/// The minimum is over the sampled input set together with the exact box
/// minimizer, which exists in closed form because every model here is
/// affine in `u`.
pub fn verify_clf_on_grid(
    w: &QuadraticForm,
    env: &Environment,
    grid: &GridSpec,
    inputs: &InputSet,
    exclusion_radius: f64,
) -> ClfVerdict {
    let decreases = map_nodes(grid.node_count(), |idx| {
        let x = grid.node_coords(idx);
        if norm2(&x) <= exclusion_radius {
            None
        } else {
            Some(best_decrease(w, env, inputs, None, &x))
        }
    });
    let mut checked = 0usize;
    let mut violating = 0usize;
    let mut worst = (f64::NEG_INFINITY, 0usize);
    for (idx, d) in decreases.iter().enumerate() {
        if let Some(d) = *d {
            checked += 1;
            if !(d < 0.0) {
                violating += 1;
            }
            if d > worst.0 || (d.is_nan() && !worst.0.is_nan()) {
                worst = (d, idx);
            }
        }
    }
    if checked == 0 {
        return ClfVerdict {
            is_clf_on_grid: true,
            worst_point: vec![0.0; grid.dim()],
            worst_decrease: f64::NEG_INFINITY,
            fraction_violating: 0.0,
        };
    }
    ClfVerdict {
        is_clf_on_grid: violating == 0,
        worst_point: grid.node_coords(worst.1),
        worst_decrease: worst.0,
        fraction_violating: violating as f64 / checked as f64,
    }
}

/// Outcome of the pointwise test `inf_u [ΔW(x,u) + ℓ(x,u)] ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Verdict {
    /// Whether the worst margin is nonpositive up to [`LEMMA1_SLACK`].
    pub holds: bool,
    /// `max_x min_u [ΔW + ℓ]` over all grid nodes.
    pub worst_margin: f64,
    /// Node attaining `worst_margin`.
    pub worst_point: Vec<f64>,
}

/// Evaluates `min_u [W(F(x,u)) − W(x) + ℓ(x,u)]` at every grid node.
pub fn check_lemma1_condition(
    w: &QuadraticForm,
    env: &Environment,
    grid: &GridSpec,
    inputs: &InputSet,
    running: &RunningCost,
) -> Lemma1Verdict {
    let margins = map_nodes(grid.node_count(), |idx| {
        lemma1_margin_at(w, env, inputs, running, &grid.node_coords(idx))
    });
    let mut worst = (f64::NEG_INFINITY, 0usize);
    for (idx, &m) in margins.iter().enumerate() {
        if m > worst.0 {
            worst = (m, idx);
        }
    }
    Lemma1Verdict {
        holds: worst.0 <= LEMMA1_SLACK,
        worst_margin: worst.0,
        worst_point: grid.node_coords(worst.1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrizes_on_construction() {
        let q = QuadraticForm::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).unwrap();
        assert_eq!(q.matrix()[(0, 1)], 1.0);
        assert_eq!(q.matrix()[(1, 0)], 1.0);
        assert_eq!(q.eval(&[1.0, 1.0]), 4.0);
    }

    #[test]
    fn rejects_indefinite() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            QuadraticForm::positive_definite(p),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn box_qp_scalar_is_exact() {
        assert_eq!(box_qp_argmin(&[2.0], &[-3.0], &[(-10.0, 10.0)]), vec![1.5]);
        assert_eq!(box_qp_argmin(&[2.0], &[-3.0], &[(-1.0, 1.0)]), vec![1.0]);
    }

    #[test]
    fn box_qp_two_dims_converges() {
        let h = [2.0, 0.5, 0.5, 1.0];
        let g = [1.0, -1.0];
        let u = box_qp_argmin(&h, &g, &[(-5.0, 5.0), (-5.0, 5.0)]);
        // Stationarity H u + g = 0.
        assert!((h[0] * u[0] + h[1] * u[1] + g[0]).abs() < 1e-12);
        assert!((h[2] * u[0] + h[3] * u[1] + g[1]).abs() < 1e-12);
    }

    #[test]
    fn unstabilizable_pair_diverges() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DMatrix::from_element(1, 1, 0.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        let r = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(
            solve_dare_discounted(&a, &b, &q, &r, 1.0),
            Err(Error::DareDiverged { .. })
        ));
    }
}
