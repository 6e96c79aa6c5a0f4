//! Sensitivity checks: trajectory bookkeeping and replay fidelity, discrete
//! adjoint gradients against finite differences of the solve itself, tangent
//! and adjoint duality, and quadrature consistency between the two sweep
//! directions.

use marcher::matrix::DenseMatrix;
use marcher::options::{FinalTimePolicy, SolveOptions};
use marcher::problem::Problem;
use marcher::problems::{bouncing_ball, bouncing_ball_events, kinetics, BOUNCING_BALL_U0, KINETICS_K, KINETICS_U0};
use marcher::sensitivity::{
    adjoint_solve, cost_integral, forward_solve, read_states, record_trajectory,
    total_derivative, AdjointState, CheckpointPolicy, CostIntegrand, ForwardSensitivity,
    Replayer, SeedKind, Trajectory,
};
use marcher::steppers::{solve, SolveHooks, SolveResult, StepperConfig, Termination};
use marcher::tableaux::registry::parse_scheme;
use marcher::Scheme;

fn opts(dt: f64, max_time: f64) -> SolveOptions {
    SolveOptions {
        t0: 0.0,
        dt0: dt,
        max_time,
        max_steps: 2_000_000,
        final_time: FinalTimePolicy::MatchStep,
        max_nonlinear_failures: None,
        stage_guess_extrapolate: false,
    }
}

fn kinetics_setup() -> (Problem, Vec<f64>) {
    (kinetics(KINETICS_K), KINETICS_U0.to_vec())
}

fn record_kinetics(
    scheme: &Scheme,
    dt: f64,
    t_end: f64,
    policy: CheckpointPolicy,
) -> (SolveResult, Trajectory) {
    let (p, u0) = kinetics_setup();
    let (res, traj) = record_trajectory(
        &p,
        scheme,
        &u0,
        &opts(dt, t_end),
        None,
        &StepperConfig::default(),
        None,
        policy,
    )
    .unwrap();
    assert_eq!(res.termination, Termination::ReachedMaxTime);
    (res, traj)
}

/// Sum of squares integrand: one cost row, no explicit parameter term.
fn sumsq_integrand() -> CostIntegrand {
    CostIntegrand {
        ncost: 1,
        r: Box::new(|_t, u| vec![u.iter().map(|x| x * x).sum()]),
        drdu: Box::new(|_t, u| {
            DenseMatrix::from_rows(&[u.iter().map(|x| 2.0 * x).collect()])
        }),
        drdp: None,
    }
}

fn bits(u: &[f64]) -> Vec<u64> {
    u.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn store_all_retains_every_state() {
    let scheme = parse_scheme("rk4").unwrap();
    let (res, mut traj) = record_kinetics(&scheme, 0.01, 1.0, CheckpointPolicy::StoreAll);
    assert_eq!(traj.final_index(), res.stats.steps_accepted);
    assert_eq!(traj.len() as u64, res.stats.steps_accepted + 1);
    assert_eq!(traj.meta().len() as u64, res.stats.steps_accepted);

    let (p, _) = kinetics_setup();
    let cfg = StepperConfig::default();
    let rep = Replayer::new(&p, &scheme, &cfg);
    for k in 0..=traj.final_index() {
        traj.get(k, &rep).unwrap();
    }
    assert_eq!(traj.replayed_attempts(), 0, "StoreAll never recomputes");

    let (t, u, _) = traj.get(traj.final_index(), &rep).unwrap();
    assert_eq!(t.to_bits(), res.t.to_bits());
    assert_eq!(bits(&u), bits(&res.u));
}

#[test]
fn binomial_budget_bounds_retention() {
    let scheme = parse_scheme("rk4").unwrap();
    let (res, mut traj) = record_kinetics(&scheme, 0.01, 1.0, CheckpointPolicy::Binomial(5));
    assert!(res.stats.steps_accepted >= 100);
    assert!(traj.max_retained() <= 5, "held {}", traj.max_retained());
    assert!(traj.len() <= 5);

    let (p, _) = kinetics_setup();
    let cfg = StepperConfig::default();
    let rep = Replayer::new(&p, &scheme, &cfg);
    let (t, u, _) = traj.get(traj.final_index(), &rep).unwrap();
    assert_eq!(t.to_bits(), res.t.to_bits());
    assert_eq!(bits(&u), bits(&res.u));
}

#[test]
fn binomial_replay_matches_stored_states() {
    let scheme = parse_scheme("rk4").unwrap();
    let (_, mut full) = record_kinetics(&scheme, 0.1, 1.0, CheckpointPolicy::StoreAll);
    let (_, mut thin) = record_kinetics(&scheme, 0.1, 1.0, CheckpointPolicy::Binomial(3));
    assert_eq!(full.final_index(), thin.final_index());

    let (p, _) = kinetics_setup();
    let cfg = StepperConfig::default();
    let rep = Replayer::new(&p, &scheme, &cfg);
    for k in 0..=full.final_index() {
        let (ta, ua, sa) = full.get(k, &rep).unwrap();
        let (tb, ub, sb) = thin.get(k, &rep).unwrap();
        assert_eq!(ta.to_bits(), tb.to_bits(), "k={k}");
        assert_eq!(bits(&ua), bits(&ub), "k={k}");
        assert_eq!(sa.len(), sb.len(), "k={k}");
        for (x, y) in sa.iter().zip(&sb) {
            assert_eq!(bits(x), bits(y), "k={k}");
        }
    }
    assert_eq!(full.replayed_attempts(), 0);
    assert!(thin.replayed_attempts() > 0);
}

#[test]
fn trajectory_insertions_must_be_ordered() {
    let mut tr = Trajectory::new(CheckpointPolicy::StoreAll, 2).unwrap();
    tr.set(0, 0.0, 0.0, &[1.0, 2.0], &[], false).unwrap();
    tr.set(1, 0.1, 0.1, &[1.1, 2.1], &[], false).unwrap();

    let err = tr.set(1, 0.1, 0.1, &[1.1, 2.1], &[], false).unwrap_err();
    assert!(err.to_string().contains("duplicate"), "{err}");
    let err = tr.set(5, 0.5, 0.1, &[0.0, 0.0], &[], false).unwrap_err();
    assert!(err.to_string().contains("out-of-order"), "{err}");
    let err = tr.set(2, 0.2, 0.1, &[0.0], &[], false).unwrap_err();
    assert!(matches!(err, marcher::Error::DimensionMismatch { .. }));

    assert!(Trajectory::new(CheckpointPolicy::Binomial(1), 2).is_err());
}

#[test]
fn get_beyond_recorded_run_errors() {
    let scheme = parse_scheme("rk4").unwrap();
    let (_, mut traj) = record_kinetics(&scheme, 0.1, 1.0, CheckpointPolicy::StoreAll);
    let (p, _) = kinetics_setup();
    let cfg = StepperConfig::default();
    let rep = Replayer::new(&p, &scheme, &cfg);
    let err = traj.get(traj.final_index() + 1, &rep).unwrap_err();
    assert!(err.to_string().contains("beyond"), "{err}");
}

#[test]
fn spill_round_trip_and_byte_layout() {
    let scheme = parse_scheme("rk4").unwrap();
    let (_, mut traj) = record_kinetics(&scheme, 0.25, 1.0, CheckpointPolicy::StoreAll);

    let mut buf = Vec::new();
    traj.write_states(&mut buf).unwrap();
    let recs = read_states(&mut buf.as_slice()).unwrap();
    assert_eq!(recs.len(), traj.len());

    // First record by hand: index 0, t = 0, three state values.
    assert_eq!(u64::from_le_bytes(buf[0..8].try_into().unwrap()), 0);
    assert_eq!(f64::from_le_bytes(buf[8..16].try_into().unwrap()), 0.0);
    assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 3);
    let u00 = f64::from_le_bytes(buf[24..32].try_into().unwrap());
    assert_eq!(u00.to_bits(), KINETICS_U0[0].to_bits());
    // Fixed record size: 8 (index) + 8 (t) + 8 (len) + 3 * 8 (values).
    assert_eq!(buf.len(), recs.len() * 48);

    let (p, _) = kinetics_setup();
    let cfg = StepperConfig::default();
    let rep = Replayer::new(&p, &scheme, &cfg);
    for (idx, t, u) in &recs {
        let (tt, uu, _) = traj.get(*idx, &rep).unwrap();
        assert_eq!(t.to_bits(), tt.to_bits());
        assert_eq!(bits(u), bits(&uu));
    }

    assert!(read_states(&mut buf[..buf.len() - 4].as_ref()).is_err());
}

#[test]
fn event_steps_stay_pinned_and_block_sweeps() {
    let p = bouncing_ball();
    let scheme = parse_scheme("rk4").unwrap();
    let cfg = StepperConfig::default();
    let mut events = bouncing_ball_events();
    let (res, mut traj) = record_trajectory(
        &p,
        &scheme,
        &BOUNCING_BALL_U0,
        &opts(0.05, 3.0),
        None,
        &cfg,
        Some(&mut events),
        CheckpointPolicy::Binomial(4),
    )
    .unwrap();
    assert!(!res.events.is_empty());
    assert!(traj.has_events());

    // Every event step still has its record despite the thinning budget.
    let retained = traj.retained_indices();
    for m in traj.meta() {
        if m.event {
            assert!(retained.contains(&m.step_index), "event step evicted");
        }
    }

    // Post-event states replay exactly even though a handler jump sits
    // between them and the run start.
    let (_, mut full) = {
        let p = bouncing_ball();
        let mut events = bouncing_ball_events();
        record_trajectory(
            &p,
            &scheme,
            &BOUNCING_BALL_U0,
            &opts(0.05, 3.0),
            None,
            &cfg,
            Some(&mut events),
            CheckpointPolicy::StoreAll,
        )
        .unwrap()
    };
    let rep = Replayer::new(&p, &scheme, &cfg);
    for k in 0..=traj.final_index() {
        let (ta, ua, _) = traj.get(k, &rep).unwrap();
        let (tb, ub, _) = full.get(k, &rep).unwrap();
        assert_eq!(ta.to_bits(), tb.to_bits(), "k={k}");
        assert_eq!(bits(&ua), bits(&ub), "k={k}");
    }

    let terminal = AdjointState::terminal(vec![vec![1.0, 0.0]], 0);
    let err = adjoint_solve(&p, &scheme, &cfg, &mut traj, &terminal, None).unwrap_err();
    assert!(err.to_string().contains("event"), "{err}");
}

#[test]
fn recording_leaves_the_solve_unchanged() {
    let (p, u0) = kinetics_setup();
    let scheme = parse_scheme("rk4").unwrap();
    let cfg = StepperConfig::default();
    let o = opts(0.02, 1.0);

    let bare = solve(&p, &scheme, &u0, &o, None, &cfg, &mut SolveHooks::none()).unwrap();
    let (p2, u02) = kinetics_setup();
    let (recorded, _) = record_trajectory(
        &p2,
        &scheme,
        &u02,
        &o,
        None,
        &cfg,
        None,
        CheckpointPolicy::Binomial(3),
    )
    .unwrap();

    assert_eq!(bare.t.to_bits(), recorded.t.to_bits());
    assert_eq!(bits(&bare.u), bits(&recorded.u));
    assert_eq!(bare.stats, recorded.stats);
    assert_eq!(bare.termination, recorded.termination);
}

#[test]
fn multistep_recording_refused_under_binomial() {
    let (p, u0) = kinetics_setup();
    let scheme = parse_scheme("bdf2").unwrap();
    let cfg = StepperConfig {
        fixed_step: true,
        ..StepperConfig::default()
    };
    let err = record_trajectory(
        &p,
        &scheme,
        &u0,
        &opts(0.05, 1.0),
        None,
        &cfg,
        None,
        CheckpointPolicy::Binomial(4),
    )
    .unwrap_err();
    assert!(err.to_string().contains("multistep"), "{err}");

    // StoreAll never replays, so multistep history is harmless there.
    let (p, u0) = kinetics_setup();
    let (res, mut traj) = record_trajectory(
        &p,
        &scheme,
        &u0,
        &opts(0.05, 1.0),
        None,
        &cfg,
        None,
        CheckpointPolicy::StoreAll,
    )
    .unwrap();
    assert_eq!(res.termination, Termination::ReachedMaxTime);
    assert_eq!(traj.len() as u64, res.stats.steps_accepted + 1);

    // But the sweeps do not differentiate multistep runs.
    let terminal = AdjointState::terminal(vec![vec![0.0, 0.0, 1.0]], 1);
    let err = adjoint_solve(&p, &scheme, &cfg, &mut traj, &terminal, None).unwrap_err();
    assert!(err.to_string().contains("not differentiated"), "{err}");
}

#[test]
fn one_step_euler_sweeps_match_the_step_map() {
    // One explicit Euler step of u' = a u: u1 = (1 + a h) u0. The adjoint of
    // the step map is multiplication by (1 + a h), the tangent likewise.
    let a = -0.37;
    let h = 0.25;
    let make = || {
        Problem::new(1)
            .with_rhs(move |_t, u: &[f64]| vec![a * u[0]])
            .with_rhsjacobian(move |_t, _u: &[f64]| DenseMatrix::from_rows(&[vec![a]]))
            .with_identity_mass()
    };
    let p = make();
    let scheme = parse_scheme("euler").unwrap();
    let cfg = StepperConfig::default();
    let (res, mut traj) = record_trajectory(
        &p,
        &scheme,
        &[2.0],
        &opts(h, h),
        None,
        &cfg,
        None,
        CheckpointPolicy::StoreAll,
    )
    .unwrap();
    assert_eq!(res.stats.steps_accepted, 1);

    let terminal = AdjointState::terminal(vec![vec![1.0]], 0);
    let (adj, cost) = adjoint_solve(&p, &scheme, &cfg, &mut traj, &terminal, None).unwrap();
    assert!(cost.is_empty());
    assert!((adj.lambda[0][0] - (1.0 + a * h)).abs() < 1e-15);

    let s0 = DenseMatrix::identity(1);
    let fwd = forward_solve(
        &p,
        &scheme,
        &cfg,
        &mut traj,
        &s0,
        SeedKind::InitialConditions,
        None,
    )
    .unwrap();
    assert!((fwd.s.get(0, 0) - (1.0 + a * h)).abs() < 1e-15);
}

/// Finite difference of the discrete solve: perturb one input, rerun the
/// same fixed ladder, difference the cost. The adjoint differentiates the
/// same map, so agreement is limited only by fd truncation and solver
/// roundoff.
fn fd_cost(
    scheme: &Scheme,
    dt: f64,
    t_end: f64,
    build: &dyn Fn(f64) -> (Problem, Vec<f64>),
    eps: f64,
    with_quad: bool,
) -> f64 {
    let cfg = StepperConfig::default();
    let mut vals = Vec::new();
    for sign in [1.0, -1.0] {
        let (p, u0) = build(sign * eps);
        let (res, mut traj) = record_trajectory(
            &p,
            scheme,
            &u0,
            &opts(dt, t_end),
            None,
            &cfg,
            None,
            CheckpointPolicy::StoreAll,
        )
        .unwrap();
        assert_eq!(res.termination, Termination::ReachedMaxTime);
        let mut v = res.u[2];
        if with_quad {
            let ig = sumsq_integrand();
            v += cost_integral(&p, scheme, &cfg, &mut traj, &ig).unwrap()[0];
        }
        vals.push(v);
    }
    (vals[0] - vals[1]) / (2.0 * eps)
}

#[test]
fn adjoint_matches_fd_of_the_discrete_solve() {
    let dt = 0.05;
    let t_end = 0.5;
    for name in ["rk4", "beuler", "cn"] {
        let scheme = parse_scheme(name).unwrap();
        let cfg = StepperConfig::default();
        for with_quad in [false, true] {
            let (p, u0) = kinetics_setup();
            let (_, mut traj) = record_trajectory(
                &p,
                &scheme,
                &u0,
                &opts(dt, t_end),
                None,
                &cfg,
                None,
                CheckpointPolicy::StoreAll,
            )
            .unwrap();
            let terminal = AdjointState::terminal(vec![vec![0.0, 0.0, 1.0]], 1);
            let ig = sumsq_integrand();
            let igr = if with_quad { Some(&ig) } else { None };
            let (adj, _) = adjoint_solve(&p, &scheme, &cfg, &mut traj, &terminal, igr).unwrap();

            // Initial-state gradient, one fd probe per component.
            for i in 0..3 {
                let fd = fd_cost(
                    &scheme,
                    dt,
                    t_end,
                    &|e| {
                        let mut u0 = KINETICS_U0.to_vec();
                        u0[i] += e;
                        (kinetics(KINETICS_K), u0)
                    },
                    1e-6,
                    with_quad,
                );
                let diff = (adj.lambda[0][i] - fd).abs();
                assert!(
                    diff <= 1e-5 * fd.abs().max(1.0),
                    "{name} quad={with_quad} dpsi/du0[{i}]: adjoint {} fd {fd}",
                    adj.lambda[0][i]
                );
            }

            // Rate-constant gradient.
            let fd = fd_cost(
                &scheme,
                dt,
                t_end,
                &|e| (kinetics(KINETICS_K + e), KINETICS_U0.to_vec()),
                1e-6,
                with_quad,
            );
            let diff = (adj.mu[0][0] - fd).abs();
            assert!(
                diff <= 1e-5 * fd.abs().max(1.0),
                "{name} quad={with_quad} dpsi/dk: adjoint {} fd {fd}",
                adj.mu[0][0]
            );
        }
    }
}

#[test]
fn multi_cost_sweep_matches_stacked_single_sweeps() {
    let scheme = parse_scheme("cn").unwrap();
    let cfg = StepperConfig::default();
    let (p, u0) = kinetics_setup();
    let (_, mut traj) = record_trajectory(
        &p,
        &scheme,
        &u0,
        &opts(0.05, 0.5),
        None,
        &cfg,
        None,
        CheckpointPolicy::StoreAll,
    )
    .unwrap();

    let rows = [vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
    let r2 = CostIntegrand {
        ncost: 2,
        r: Box::new(|_t, u| vec![u[0] * u[1], u[2] * u[2]]),
        drdu: Box::new(|_t, u| {
            DenseMatrix::from_rows(&[
                vec![u[1], u[0], 0.0],
                vec![0.0, 0.0, 2.0 * u[2]],
            ])
        }),
        drdp: None,
    };
    let terminal2 = AdjointState::terminal(rows.to_vec(), 1);
    let (adj2, cost2) = adjoint_solve(&p, &scheme, &cfg, &mut traj, &terminal2, Some(&r2)).unwrap();

    let singles = [
        CostIntegrand {
            ncost: 1,
            r: Box::new(|_t, u: &[f64]| vec![u[0] * u[1]]),
            drdu: Box::new(|_t, u: &[f64]| DenseMatrix::from_rows(&[vec![u[1], u[0], 0.0]])),
            drdp: None,
        },
        CostIntegrand {
            ncost: 1,
            r: Box::new(|_t, u: &[f64]| vec![u[2] * u[2]]),
            drdu: Box::new(|_t, u: &[f64]| DenseMatrix::from_rows(&[vec![0.0, 0.0, 2.0 * u[2]]])),
            drdp: None,
        },
    ];
    for (j, ig) in singles.iter().enumerate() {
        let terminal = AdjointState::terminal(vec![rows[j].clone()], 1);
        let (adj, cost) = adjoint_solve(&p, &scheme, &cfg, &mut traj, &terminal, Some(ig)).unwrap();
        assert_eq!(bits(&adj.lambda[0]), bits(&adj2.lambda[j]), "row {j}");
        assert_eq!(bits(&adj.mu[0]), bits(&adj2.mu[j]), "row {j}");
        assert_eq!(cost[0].to_bits(), cost2[j].to_bits(), "row {j}");
    }
}

#[test]
fn forward_and_adjoint_are_duals() {
    // v^T S_N w against mu_0^T w: both sides differentiate the same discrete
    // map at the same computed states, so they agree to roundoff, far below
    // the discretization or Newton error.
    let v = [0.3, -1.2, 0.7];
    for name in ["rk4", "cn", "beuler"] {
        let scheme = parse_scheme(name).unwrap();
        let cfg = StepperConfig::default();
        let (p, u0) = kinetics_setup();
        let (_, mut traj) = record_trajectory(
            &p,
            &scheme,
            &u0,
            &opts(0.05, 0.5),
            None,
            &cfg,
            None,
            CheckpointPolicy::StoreAll,
        )
        .unwrap();

        let s0 = DenseMatrix::zeros(3, 1);
        let fwd = forward_solve(
            &p,
            &scheme,
            &cfg,
            &mut traj,
            &s0,
            SeedKind::Parameters,
            None,
        )
        .unwrap();
        let vs: f64 = (0..3).map(|i| v[i] * fwd.s.get(i, 0)).sum();

        let terminal = AdjointState::terminal(vec![v.to_vec()], 1);
        let (adj, _) = adjoint_solve(&p, &scheme, &cfg, &mut traj, &terminal, None).unwrap();
        let mu = adj.mu[0][0];

        let denom = vs.abs().max(mu.abs()).max(1e-30);
        assert!(
            (vs - mu).abs() / denom <= 1e-10,
            "{name}: v^T S w = {vs}, mu^T w = {mu}"
        );
    }
}

#[test]
fn quadrature_agrees_forward_and_backward() {
    for name in ["rk4", "cn"] {
        let scheme = parse_scheme(name).unwrap();
        let cfg = StepperConfig::default();
        let (p, u0) = kinetics_setup();
        let (_, mut traj) = record_trajectory(
            &p,
            &scheme,
            &u0,
            &opts(0.05, 0.5),
            None,
            &cfg,
            None,
            CheckpointPolicy::StoreAll,
        )
        .unwrap();

        let ig = sumsq_integrand();
        let q_fwd = cost_integral(&p, &scheme, &cfg, &mut traj, &ig).unwrap()[0];

        let terminal = AdjointState::terminal(vec![vec![0.0, 0.0, 1.0]], 1);
        let (_, q_bwd) = adjoint_solve(&p, &scheme, &cfg, &mut traj, &terminal, Some(&ig)).unwrap();

        let s0 = DenseMatrix::zeros(3, 1);
        let fwd = forward_solve(
            &p,
            &scheme,
            &cfg,
            &mut traj,
            &s0,
            SeedKind::Parameters,
            Some(&ig),
        )
        .unwrap();

        assert!(
            (q_fwd - q_bwd[0]).abs() <= 1e-12 * q_fwd.abs().max(1.0),
            "{name}: forward {q_fwd} backward {}",
            q_bwd[0]
        );
        assert!(
            (q_fwd - fwd.cost_integral[0]).abs() <= 1e-12 * q_fwd.abs().max(1.0),
            "{name}: standalone {q_fwd} tangent-run {}",
            fwd.cost_integral[0]
        );

        // The integral's parameter derivative is dual the same way.
        let (adj, _) = adjoint_solve(
            &p,
            &scheme,
            &cfg,
            &mut traj,
            &AdjointState::terminal(vec![vec![0.0; 3]], 1),
            Some(&ig),
        )
        .unwrap();
        let dq_fwd = fwd.quadrature_sensitivity.get(0, 0);
        let dq_adj = adj.mu[0][0];
        let denom = dq_fwd.abs().max(dq_adj.abs()).max(1e-30);
        assert!(
            (dq_fwd - dq_adj).abs() / denom <= 1e-10,
            "{name}: dq forward {dq_fwd} adjoint {dq_adj}"
        );
    }
}

#[test]
fn total_derivative_composes_chain_rule() {
    let fwd = ForwardSensitivity {
        s: DenseMatrix::identity(3),
        quadrature_sensitivity: DenseMatrix::zeros(0, 3),
        cost_integral: vec![],
    };
    let g = total_derivative(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0], &fwd).unwrap();
    assert_eq!(g, vec![1.0, 2.0, 3.0]);

    let g = total_derivative(&[0.0, 0.0, 0.0], &[4.0, 5.0, 6.0], &fwd).unwrap();
    assert_eq!(g, vec![4.0, 5.0, 6.0]);

    let fwd = ForwardSensitivity {
        s: DenseMatrix::zeros(3, 2),
        quadrature_sensitivity: DenseMatrix::from_rows(&[vec![0.5, -0.5]]),
        cost_integral: vec![1.0],
    };
    let g = total_derivative(&[1.0, 1.0, 1.0], &[0.0, 0.0], &fwd).unwrap();
    assert_eq!(g, vec![0.5, -0.5]);

    assert!(total_derivative(&[1.0], &[0.0, 0.0], &fwd).is_err());
}

#[test]
fn parameter_seed_requires_declared_parameters() {
    let p = Problem::new(1)
        .with_rhs(|_t, u: &[f64]| vec![-u[0]])
        .with_rhsjacobian(|_t, _u: &[f64]| DenseMatrix::from_rows(&[vec![-1.0]]))
        .with_identity_mass();
    let scheme = parse_scheme("euler").unwrap();
    let cfg = StepperConfig::default();
    let (_, mut traj) = record_trajectory(
        &p,
        &scheme,
        &[1.0],
        &opts(0.1, 0.5),
        None,
        &cfg,
        None,
        CheckpointPolicy::StoreAll,
    )
    .unwrap();
    let s0 = DenseMatrix::zeros(1, 1);
    let err = forward_solve(
        &p,
        &scheme,
        &cfg,
        &mut traj,
        &s0,
        SeedKind::Parameters,
        None,
    )
    .unwrap_err();
    assert!(err.to_string().contains("parameter"), "{err}");
}

#[test]
fn binomial_adjoint_bitwise_matches_store_all() {
    // 50 fixed steps, budget 3: every gradient entry must come out with the
    // same bits whether states were stored or replayed.
    let scheme = parse_scheme("rk4").unwrap();
    let cfg = StepperConfig::default();
    let terminal = AdjointState::terminal(vec![vec![0.0, 0.0, 1.0]], 1);
    let ig = sumsq_integrand();

    let mut results = Vec::new();
    for policy in [CheckpointPolicy::StoreAll, CheckpointPolicy::Binomial(3)] {
        let (p, u0) = kinetics_setup();
        let (res, mut traj) = record_trajectory(
            &p,
            &scheme,
            &u0,
            &opts(0.02, 1.0),
            None,
            &cfg,
            None,
            policy,
        )
        .unwrap();
        assert_eq!(res.stats.steps_accepted, 50);
        let (adj, cost) =
            adjoint_solve(&p, &scheme, &cfg, &mut traj, &terminal, Some(&ig)).unwrap();

        let s0 = DenseMatrix::zeros(3, 1);
        let fwd = forward_solve(
            &p,
            &scheme,
            &cfg,
            &mut traj,
            &s0,
            SeedKind::Parameters,
            Some(&ig),
        )
        .unwrap();
        results.push((adj, cost, fwd, traj.replayed_attempts()));
    }

    let (a, ca, fa, replays_a) = &results[0];
    let (b, cb, fb, replays_b) = &results[1];
    assert_eq!(bits(&a.lambda[0]), bits(&b.lambda[0]));
    assert_eq!(bits(&a.mu[0]), bits(&b.mu[0]));
    assert_eq!(ca[0].to_bits(), cb[0].to_bits());
    for i in 0..3 {
        assert_eq!(fa.s.get(i, 0).to_bits(), fb.s.get(i, 0).to_bits());
    }
    assert_eq!(
        fa.quadrature_sensitivity.get(0, 0).to_bits(),
        fb.quadrature_sensitivity.get(0, 0).to_bits()
    );
    assert_eq!(*replays_a, 0);
    assert!(*replays_b > 0);
}
