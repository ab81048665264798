use clfshape_core::analysis::{
    certify_stability, check_domination, check_proposition1, check_theorem1, composite_check,
    condition_margin, empirical_gamma_bar, estimate_growth_constant, gap_ratio, trial_succeeds,
    CertificateInputs, DominationVerdict, RolloutProtocol, DEFAULT_EXCLUSION_RADIUS,
};
use clfshape_core::costs::{CostKind, RunningCost};
use clfshape_core::dynamics::{
    make_double_integrator, make_pendulum, Environment, LinearFeedback, PendulumParams,
    RolloutTrace, ZeroInput,
};
use clfshape_core::gridsolve::{
    make_suboptimal, optimality_gap, policy_evaluation, value_iteration, BackupTable, FieldMeta,
    GridSpec, InputSet, ValueField, DEFAULT_ESCAPE_PENALTY,
};
use clfshape_core::quadratics::{synthesize_clf, synthesize_clf_with_gain, QuadraticForm};
use clfshape_core::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

const MAX_SWEEPS: usize = 200_000;

fn qr() -> (DMatrix<f64>, DMatrix<f64>) {
    (DMatrix::identity(2, 2), DMatrix::from_element(1, 1, 0.1))
}

fn running() -> RunningCost {
    RunningCost::diagonal(&[1.0, 1.0], &[0.1])
}

fn di() -> Environment {
    make_double_integrator(0.1)
        .unwrap()
        .with_input_bound(20.0)
        .unwrap()
}

fn pendulum(h: f64) -> Environment {
    make_pendulum(0.1, h, PendulumParams::default()).unwrap()
}

fn table_with(
    env: &Environment,
    nodes: usize,
    inputs: usize,
    w: Option<&QuadraticForm>,
) -> BackupTable {
    let grid = GridSpec::for_env(env, vec![nodes; 2]).unwrap();
    let set = InputSet::for_env(env, inputs).unwrap();
    BackupTable::build(env, &grid, &set, &running(), w, DEFAULT_ESCAPE_PENALTY).unwrap()
}

fn shaped_table(env: &Environment, nodes: usize, inputs: usize) -> BackupTable {
    let (q, r) = qr();
    let w = synthesize_clf(env, &q, &r, 1.0).unwrap();
    table_with(env, nodes, inputs, Some(&w))
}

fn field(values: Vec<f64>, kind: CostKind, gamma: f64) -> ValueField {
    ValueField {
        values,
        meta: FieldMeta {
            cost_kind: kind,
            gamma,
            bellman_residual: 0.0,
            sweep_count: 0,
        },
    }
}

fn trace(norms: &[f64]) -> RolloutTrace {
    RolloutTrace {
        states: norms.iter().map(|&r| vec![r, 0.0]).collect(),
        inputs: vec![vec![0.0]; norms.len() - 1],
        running_costs: vec![],
        horizon_steps: norms.len() - 1,
        escaped_at: None,
    }
}

#[test]
fn growth_constant_of_a_multiple_of_the_state_cost() {
    let grid = GridSpec::new(
        vec![21, 21],
        vec![(-2.0, 2.0), (-2.0, 2.0)],
        vec![false, false],
    )
    .unwrap();
    let q = QuadraticForm::diagonal(&[1.0, 2.0]);
    for c in [0.5, 1.0, 3.0] {
        let f = field(grid.sample(|x| c * q.eval(x)), CostKind::Standard, 0.5);
        let est = estimate_growth_constant(&f, &q, &grid, DEFAULT_EXCLUSION_RADIUS).unwrap();
        assert!((est - c).abs() < 1e-12);
    }
}

#[test]
fn growth_constant_skips_the_origin_ball() {
    let grid = GridSpec::new(
        vec![21, 21],
        vec![(-2.0, 2.0), (-2.0, 2.0)],
        vec![false, false],
    )
    .unwrap();
    let q = QuadraticForm::identity(2);
    let mut values = grid.sample(|x| q.eval(x));
    values[grid.origin_index()] = 1.0;
    let f = field(values, CostKind::Standard, 0.5);
    assert!((estimate_growth_constant(&f, &q, &grid, 0.05).unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(
        estimate_growth_constant(&f, &q, &grid, 10.0),
        Err(Error::EmptyNodeSet)
    ));
}

#[test]
fn gap_ratio_reads_the_largest_scaled_gap() {
    let grid = GridSpec::new(
        vec![5, 5],
        vec![(-2.0, 2.0), (-2.0, 2.0)],
        vec![false, false],
    )
    .unwrap();
    let q = QuadraticForm::identity(2);
    let v_star = field(grid.sample(|x| q.eval(x)), CostKind::Standard, 0.5);
    let target = grid.flat_index(&[3, 2]);
    let mut pi_values = v_star.values.clone();
    pi_values[target] += 0.25;
    let v_pi = field(pi_values, CostKind::Standard, 0.5);
    let gap = optimality_gap(&v_pi, &v_star).unwrap();
    let delta = gap_ratio(&gap, &q, &grid, 0.05).unwrap();
    assert!((delta - 0.25).abs() < 1e-12);
}

#[test]
fn condition_margin_examples() {
    assert!((condition_margin(0.5, 1.0, 0.5) - 0.5).abs() < 1e-15);
    assert!((condition_margin(0.9, 4.0, 1.0) - 5.0).abs() < 1e-12);
    assert_eq!(
        condition_margin(0.5, 1.0, -0.3),
        condition_margin(0.5, 1.0, 0.0)
    );
    assert!(condition_margin(0.0, 1.2, 0.0) < 0.0);
}

#[test]
fn success_requires_entering_and_staying_in_the_ball() {
    assert!(trial_succeeds(&trace(&[1.0, 0.5, 0.04, 0.01, 0.0]), 0.05));
    assert!(!trial_succeeds(&trace(&[1.0, 0.04, 0.2, 0.01]), 0.05));
    assert!(!trial_succeeds(&trace(&[1.0, 0.5, 0.2, 0.06]), 0.05));
    assert!(!trial_succeeds(&trace(&[1.0, 0.5, 0.05]), 0.05));
}

#[test]
fn initial_conditions_are_reproducible_and_inside_the_box() {
    let p = RolloutProtocol::new(vec![(-1.0, 1.0), (-0.5, 0.5)], 7);
    let a = p.initial_conditions();
    assert_eq!(a, p.initial_conditions());
    assert_eq!(a.len(), 20);
    assert!(a.iter().all(|x| x[0].abs() <= 1.0 && x[1].abs() <= 0.5));
    let q = RolloutProtocol {
        seed: 8,
        ..p.clone()
    };
    assert_ne!(a, q.initial_conditions());
    assert_eq!(p.horizon_steps(0.1), 200);
}

#[test]
fn lqr_stabilizes_the_double_integrator_and_zero_input_does_not_stabilize_the_pendulum() {
    let env = di();
    let (q, r) = qr();
    let sol = synthesize_clf_with_gain(&env, &q, &r, 1.0).unwrap();
    let lqr = LinearFeedback::new(sol.k.clone()).saturated(&env);
    let protocol = RolloutProtocol::new(vec![(-1.0, 1.0), (-1.0, 1.0)], 0);
    let rec = certify_stability(&env, &lqr, &protocol).unwrap();
    assert!(rec.all_succeeded());
    assert_eq!(rec.success_fraction(), 1.0);

    let pend = pendulum(20.0);
    let protocol = RolloutProtocol::new(vec![(-0.5, 0.5), (-0.5, 0.5)], 0);
    let rec = certify_stability(&pend, &ZeroInput, &protocol).unwrap();
    assert_eq!(rec.n_success, 0);
}

#[test]
fn certify_rejects_bad_protocols() {
    let env = di();
    let p = RolloutProtocol::new(vec![(-1.0, 1.0)], 0);
    assert!(matches!(
        certify_stability(&env, &ZeroInput, &p),
        Err(Error::DimensionMismatch { .. })
    ));
    let p = RolloutProtocol {
        n_trials: 0,
        ..RolloutProtocol::new(vec![(-1.0, 1.0); 2], 0)
    };
    assert!(certify_stability(&env, &ZeroInput, &p).is_err());
}

#[test]
fn composite_decrease_equals_scaled_value_minus_running_cost() {
    let env = pendulum(20.0);
    let t = shaped_table(&env, 41, 21);
    let gamma = 0.5;
    let (_, pi) = value_iteration(&t, CostKind::Shaped, gamma, 1e-9, MAX_SWEEPS).unwrap();
    let v = policy_evaluation(&t, CostKind::Shaped, gamma, &pi, 1e-12).unwrap();
    let check = composite_check(&t, gamma, &pi, &v, DEFAULT_EXCLUSION_RADIUS, 1e-6).unwrap();
    let w = t.clf().unwrap();
    let q = &t.running().q;
    let (mut dec, mut pos) = (f64::NEG_INFINITY, f64::INFINITY);
    for node in 0..t.node_count() {
        let x = t.grid().node_coords(node);
        if x.iter().map(|c| c * c).sum::<f64>().sqrt() <= DEFAULT_EXCLUSION_RADIUS {
            continue;
        }
        let u = t.inputs().input(pi.at(node));
        dec = dec.max((1.0 - gamma) * v.values[node] - running().eval(&x, u));
        pos = pos.min(gamma * (w.eval(&x) + v.values[node] - q.eval(&x)));
    }
    assert!((check.decrease_max - dec).abs() < 1e-8 * (1.0 + dec.abs()));
    assert!((check.positivity_min - pos).abs() < 1e-8 * (1.0 + pos.abs()));
    assert_eq!(check.decrease_holds, check.decrease_max < 0.0);
    assert_eq!(check.positivity_holds, check.positivity_min > -2e-6);
}

#[test]
fn composite_check_needs_a_shaped_field_and_a_clf() {
    let env = di();
    let t = table_with(&env, 11, 5, None);
    let (v, pi) = value_iteration(&t, CostKind::Standard, 0.5, 1e-8, MAX_SWEEPS).unwrap();
    assert!(composite_check(&t, 0.5, &pi, &v, 0.05, 1e-6).is_err());
    let t = shaped_table(&env, 11, 5);
    assert!(matches!(
        composite_check(&t, 0.5, &pi, &v, 0.05, 1e-6),
        Err(Error::MetadataMismatch(_))
    ));
}

#[test]
fn certificates_are_internally_consistent() {
    let env = di();
    let t = shaped_table(&env, 41, 41);
    let protocol = RolloutProtocol::new(vec![(-1.0, 1.0), (-1.0, 1.0)], 3);
    let gamma = 0.9;
    for kind in [CostKind::Standard, CostKind::Shaped] {
        let (v_star, _) = value_iteration(&t, kind, gamma, 1e-8, MAX_SWEEPS).unwrap();
        for rank in 1..=3 {
            let pi = make_suboptimal(&t, kind, gamma, &v_star, rank).unwrap();
            let v_pi = policy_evaluation(&t, kind, gamma, &pi, 1e-10).unwrap();
            let inputs = CertificateInputs {
                env: &env,
                table: &t,
                gamma,
                policy: &pi,
                v_star: &v_star,
                v_pi: &v_pi,
                exclusion_radius: DEFAULT_EXCLUSION_RADIUS,
                protocol: &protocol,
            };
            let cert = match kind {
                CostKind::Standard => check_proposition1(&inputs).unwrap(),
                CostKind::Shaped => check_theorem1(&inputs, 1e-6).unwrap(),
            };
            let c = estimate_growth_constant(
                &v_star,
                &t.running().q,
                t.grid(),
                DEFAULT_EXCLUSION_RADIUS,
            )
            .unwrap();
            assert_eq!(cert.c_constant, c);
            assert_eq!(
                cert.condition_margin,
                condition_margin(gamma, c, cert.delta)
            );
            assert_eq!(cert.predicted_stable, cert.condition_margin > 0.0);
            assert_eq!(cert.composite.is_some(), kind == CostKind::Shaped);
            if cert.predicted_stable {
                assert!(
                    cert.empirical.all_succeeded(),
                    "{kind:?} rank {rank}: {cert:?}"
                );
            }
        }
    }
}

#[test]
fn certificates_check_metadata_and_discount() {
    let env = di();
    let t = shaped_table(&env, 11, 5);
    let protocol = RolloutProtocol::new(vec![(-1.0, 1.0), (-1.0, 1.0)], 0);
    let (v, pi) = value_iteration(&t, CostKind::Standard, 0.5, 1e-8, MAX_SWEEPS).unwrap();
    let inputs = CertificateInputs {
        env: &env,
        table: &t,
        gamma: 0.5,
        policy: &pi,
        v_star: &v,
        v_pi: &v,
        exclusion_radius: 0.05,
        protocol: &protocol,
    };
    assert!(matches!(
        check_theorem1(&inputs, 1e-6),
        Err(Error::MetadataMismatch(_))
    ));
    assert!(check_proposition1(&CertificateInputs {
        gamma: 1.0,
        ..inputs
    })
    .is_err());
    assert!(check_proposition1(&inputs).is_ok());
}

#[test]
fn zero_clf_makes_shaped_and_standard_problems_identical() {
    let env = pendulum(7.0);
    let t = table_with(&env, 31, 21, Some(&QuadraticForm::zero(2)));
    let (v, _) = value_iteration(&t, CostKind::Standard, 0.9, 1e-8, MAX_SWEEPS).unwrap();
    let (vt, _) = value_iteration(&t, CostKind::Shaped, 0.9, 1e-8, MAX_SWEEPS).unwrap();
    let verdict = check_domination(&v, &vt).unwrap();
    assert!(verdict.holds_on_grid);
    assert_eq!(verdict.worst_violation, 0.0);
    assert_eq!(verdict.violating_nodes, 0);
}

#[test]
fn shaped_value_dominates_at_high_discount_on_the_double_integrator() {
    let env = di();
    let t = shaped_table(&env, 41, 41);
    let (v, _) = value_iteration(&t, CostKind::Standard, 0.99, 1e-7, MAX_SWEEPS).unwrap();
    let (vt, _) = value_iteration(&t, CostKind::Shaped, 0.99, 1e-7, MAX_SWEEPS).unwrap();
    let verdict = check_domination(&v, &vt).unwrap();
    assert!(verdict.holds_on_grid, "{verdict:?}");
}

#[test]
fn myopic_shaped_value_is_not_dominated_by_the_myopic_standard_value() {
    let env = di();
    let t = shaped_table(&env, 21, 21);
    let (v, _) = value_iteration(&t, CostKind::Standard, 0.0, 1e-8, MAX_SWEEPS).unwrap();
    let (vt, _) = value_iteration(&t, CostKind::Shaped, 0.0, 1e-8, MAX_SWEEPS).unwrap();
    let verdict = check_domination(&v, &vt).unwrap();
    assert!(verdict.worst_violation.is_finite());
    assert_eq!(verdict.gamma, 0.0);
}

#[test]
fn domination_checks_metadata() {
    let a = field(vec![1.0; 4], CostKind::Standard, 0.5);
    let b = field(vec![1.0; 4], CostKind::Shaped, 0.9);
    let c = field(vec![1.0; 3], CostKind::Shaped, 0.5);
    assert!(matches!(
        check_domination(&a, &b),
        Err(Error::MetadataMismatch(_))
    ));
    assert!(matches!(
        check_domination(&a, &c),
        Err(Error::MetadataMismatch(_))
    ));
    assert!(matches!(
        check_domination(&b, &a),
        Err(Error::MetadataMismatch(_))
    ));
}

#[test]
fn gamma_bar_is_the_smallest_dominating_discount() {
    let v = |gamma: f64, holds: bool| DominationVerdict {
        gamma,
        holds_on_grid: holds,
        worst_violation: 0.0,
        violating_nodes: 0,
    };
    assert_eq!(
        empirical_gamma_bar(&[v(0.0, false), v(0.5, true), v(0.9, true)]),
        Some(0.5)
    );
    assert_eq!(
        empirical_gamma_bar(&[v(0.9, true), v(0.3, true)]),
        Some(0.3)
    );
    assert_eq!(empirical_gamma_bar(&[v(0.9, false)]), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn growth_constants_are_invariant_under_cost_scaling(c in 0.2f64..5.0, gamma in 0.0f64..0.9) {
        let env = pendulum(7.0);
        let grid = GridSpec::for_env(&env, vec![15, 15]).unwrap();
        let set = InputSet::for_env(&env, 9).unwrap();
        let (q, r) = qr();
        let w = synthesize_clf(&env, &q, &r, 1.0).unwrap();
        let base = BackupTable::build(&env, &grid, &set, &running(), Some(&w), DEFAULT_ESCAPE_PENALTY).unwrap();
        let scaled = BackupTable::build(
            &env, &grid, &set, &running().scaled(c), Some(&w.scaled(c)), c * DEFAULT_ESCAPE_PENALTY,
        ).unwrap();
        for kind in [CostKind::Standard, CostKind::Shaped] {
            let (v, _) = value_iteration(&base, kind, gamma, 1e-10, MAX_SWEEPS).unwrap();
            let (vs, _) = value_iteration(&scaled, kind, gamma, 1e-10 * c, MAX_SWEEPS).unwrap();
            let a = estimate_growth_constant(&v, &base.running().q, &grid, 0.05).unwrap();
            let b = estimate_growth_constant(&vs, &scaled.running().q, &grid, 0.05).unwrap();
            prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn margin_decreases_in_growth_and_gap(gamma in 0.0f64..0.99, c in 0.0f64..50.0, d in 0.0f64..10.0, e in 0.0f64..5.0) {
        prop_assert!(condition_margin(gamma, c + e, d) <= condition_margin(gamma, c, d));
        prop_assert!(condition_margin(gamma, c, d + e) <= condition_margin(gamma, c, d));
    }
}
