//! Built-in problems: small systems exercised by the test suite and the
//! command-line driver. Each constructor returns a fully wired [`Problem`];
//! [`instance`] bundles one with its conventional initial data and defaults.

use crate::error::{Error, Result};
use crate::events::EventSpec;
use crate::matrix::DenseMatrix;
use crate::problem::Problem;

/// Second-order reaction `A + B -> C` with rate constant `k`:
/// `u0' = -k u0 u1`, `u1' = -k u0 u1`, `u2' = +k u0 u1`, registered in
/// residual form with its analytic shifted Jacobian and `dF/dk`.
pub fn kinetics(k: f64) -> Problem {
    Problem::new(3)
        .with_ifunction(move |_t, u, udot| {
            let r = k * u[0] * u[1];
            vec![udot[0] + r, udot[1] + r, udot[2] - r]
        })
        .with_ijacobian(move |_t, u, _udot, a| {
            DenseMatrix::from_rows(&[
                vec![a + k * u[1], k * u[0], 0.0],
                vec![k * u[1], a + k * u[0], 0.0],
                vec![-k * u[1], -k * u[0], a],
            ])
        })
        .with_params(1, move |_t, u| {
            let r = u[0] * u[1];
            DenseMatrix::from_rows(&[vec![r], vec![r], vec![-r]])
        })
        .with_identity_mass()
}

pub const KINETICS_K: f64 = 0.9;
pub const KINETICS_U0: [f64; 3] = [1.0, 0.7, 0.0];

/// Closed-form solution of the reaction from `u0` at time 0.
///
/// With `d0 = u0[0] - u0[1]` constant along trajectories,
/// `q(t) = (1 - exp(-k t d0)) / d0` (continuously `k t` at `d0 = 0`) gives
/// `u0(t) = u0[0] / (1 + u0[1] q)`; the two conservation laws fill in the
/// rest.
pub fn kinetics_exact(k: f64, u0: &[f64; 3], t: f64) -> [f64; 3] {
    let d0 = u0[0] - u0[1];
    let q = if d0.abs() < 1e-14 {
        k * t
    } else {
        (1.0 - (-k * t * d0).exp()) / d0
    };
    let a = u0[0] / (1.0 + u0[1] * q);
    let b = a - d0;
    let c = u0[1] + u0[2] - b;
    [a, b, c]
}

/// The three-variable Oregonator in residual form `udot - f(u)` with its
/// analytic shifted Jacobian. Stiff: the fast variable swings over four
/// orders of magnitude each relaxation cycle.
pub fn orego() -> Problem {
    const S: f64 = 77.27;
    const Q: f64 = 8.375e-6;
    const W: f64 = 0.161;
    Problem::new(3)
        .with_ifunction(move |_t, u, udot| {
            let f0 = S * (u[1] + u[0] * (1.0 - Q * u[0] - u[1]));
            let f1 = (u[2] - (1.0 + u[0]) * u[1]) / S;
            let f2 = W * (u[0] - u[2]);
            vec![udot[0] - f0, udot[1] - f1, udot[2] - f2]
        })
        .with_ijacobian(move |_t, u, _udot, a| {
            DenseMatrix::from_rows(&[
                vec![
                    a - S * (1.0 - 2.0 * Q * u[0] - u[1]),
                    -S * (1.0 - u[0]),
                    0.0,
                ],
                vec![u[1] / S, a + (1.0 + u[0]) / S, -1.0 / S],
                vec![-W, 0.0, a + W],
            ])
        })
        .with_identity_mass()
}

pub const OREGO_U0: [f64; 3] = [1.0, 2.0, 3.0];

/// Gray-Scott reaction-diffusion on an `n x n` periodic grid, method of
/// lines with the 5-point stencil, registered as an explicit right-hand side
/// with its analytic Jacobian.
///
/// State layout: activator `u` in the first `n*n` slots (row-major), then
/// inhibitor `v`.
pub fn grayscott(n: usize) -> Problem {
    const D1: f64 = 8.0e-5;
    const D2: f64 = 4.0e-5;
    const GAMMA: f64 = 0.024;
    const KAPPA: f64 = 0.06;
    const LENGTH: f64 = 2.5;
    let nn = n * n;
    let h = LENGTH / n as f64;
    let ih2 = 1.0 / (h * h);

    let wrap = move |i: isize| -> usize { i.rem_euclid(n as isize) as usize };
    let lap = move |field: &[f64], i: usize, j: usize| -> f64 {
        let (i, j) = (i as isize, j as isize);
        field[wrap(i - 1) * n + wrap(j)] + field[wrap(i + 1) * n + wrap(j)]
            + field[wrap(i) * n + wrap(j - 1)]
            + field[wrap(i) * n + wrap(j + 1)]
            - 4.0 * field[wrap(i) * n + wrap(j)]
    };

    Problem::new(2 * nn)
        .with_rhs(move |_t, state| {
            let (u, v) = state.split_at(nn);
            let mut out = vec![0.0; 2 * nn];
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    let uv2 = u[k] * v[k] * v[k];
                    out[k] = D1 * ih2 * lap(u, i, j) - uv2 + GAMMA * (1.0 - u[k]);
                    out[nn + k] = D2 * ih2 * lap(v, i, j) + uv2 - (GAMMA + KAPPA) * v[k];
                }
            }
            out
        })
        .with_rhsjacobian(move |_t, state| {
            let (u, v) = state.split_at(nn);
            let mut jac = DenseMatrix::zeros(2 * nn, 2 * nn);
            let stencil = |jac: &mut DenseMatrix, row: usize, base: usize, i: usize, j: usize, d: f64| {
                let (i, j) = (i as isize, j as isize);
                jac.add_to(row, base + wrap(i - 1) * n + wrap(j), d);
                jac.add_to(row, base + wrap(i + 1) * n + wrap(j), d);
                jac.add_to(row, base + wrap(i) * n + wrap(j - 1), d);
                jac.add_to(row, base + wrap(i) * n + wrap(j + 1), d);
                jac.add_to(row, base + wrap(i) * n + wrap(j), -4.0 * d);
            };
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    stencil(&mut jac, k, 0, i, j, D1 * ih2);
                    jac.add_to(k, k, -v[k] * v[k] - GAMMA);
                    jac.add_to(k, nn + k, -2.0 * u[k] * v[k]);
                    stencil(&mut jac, nn + k, nn, i, j, D2 * ih2);
                    jac.add_to(nn + k, k, v[k] * v[k]);
                    jac.add_to(nn + k, nn + k, 2.0 * u[k] * v[k] - (GAMMA + KAPPA));
                }
            }
            jac
        })
}

/// The standard pattern-formation seed: uniform `u = 1`, `v = 0` background
/// with a centered square knocked to `u = 0.5`, `v = 0.25`.
pub fn grayscott_initial(n: usize) -> Vec<f64> {
    let nn = n * n;
    let mut state = vec![0.0; 2 * nn];
    state[..nn].fill(1.0);
    let (lo, hi) = (3 * n / 8, 5 * n / 8);
    for i in lo..hi {
        for j in lo..hi {
            state[i * n + j] = 0.5;
            state[nn + i * n + j] = 0.25;
        }
    }
    state
}

/// Free fall: `height' = velocity`, `velocity' = -9.8`.
pub fn bouncing_ball() -> Problem {
    Problem::new(2)
        .with_rhs(|_t, u| vec![u[1], -9.8])
        .with_rhsjacobian(|_t, _u| {
            DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]])
        })
}

pub const BOUNCING_BALL_U0: [f64; 2] = [10.0, 0.0];

/// Impact detector for [`bouncing_ball`]: fires when the height falls
/// through zero and reverses the velocity at 0.9 of its impact magnitude.
pub fn bouncing_ball_events() -> EventSpec {
    EventSpec::with_scalar_tol(vec![-1], vec![false], 1e-9, |_t, u: &[f64]| vec![u[0]])
        .expect("static event spec is valid")
        .with_post_event(|_ids, _t, u, _forward| {
            u[1] = -0.9 * u[1];
        })
}

/// Scalar `u' = lambda u` for order studies and stability demonstrations.
pub fn linear_test(lambda: f64) -> Problem {
    Problem::new(1)
        .with_rhs(move |_t, u| vec![lambda * u[0]])
        .with_rhsjacobian(move |_t, _u| DenseMatrix::from_rows(&[vec![lambda]]))
}

/// Scalar `u' = stiff*u + soft*u` split additively: the stiff part goes to
/// the residual, the soft part stays explicit.
pub fn split_linear(stiff: f64, soft: f64) -> Problem {
    Problem::new(1)
        .with_ifunction(move |_t, u, udot| vec![udot[0] - stiff * u[0]])
        .with_ijacobian(move |_t, _u, _udot, a| {
            DenseMatrix::from_rows(&[vec![a - stiff]])
        })
        .with_rhs(move |_t, u| vec![soft * u[0]])
        .with_rhsjacobian(move |_t, _u| DenseMatrix::from_rows(&[vec![soft]]))
        .with_identity_mass()
}

/// Knobs honored by [`instance`]; unused fields are ignored per problem.
#[derive(Debug, Clone, Copy)]
pub struct ProblemParams {
    /// Reaction rate for `kinetics`.
    pub k: f64,
    /// Coefficient for `linear-test` (and the soft part of `split-linear`).
    pub lambda: f64,
    /// Stiff coefficient for `split-linear`.
    pub stiff: f64,
    /// Grid edge for `grayscott`.
    pub grid: usize,
}

impl Default for ProblemParams {
    fn default() -> Self {
        ProblemParams {
            k: KINETICS_K,
            lambda: -1.0,
            stiff: -1000.0,
            grid: 32,
        }
    }
}

/// A problem plus its conventional initial data and solver defaults.
pub struct Instance {
    pub name: &'static str,
    pub problem: Problem,
    pub u0: Vec<f64>,
    /// Closed-form solution from `u0` at `t0 = 0`, when one exists.
    pub exact: Option<Box<dyn Fn(f64) -> Vec<f64>>>,
    pub events: Option<EventSpec>,
    pub default_dt: f64,
    pub default_max_time: f64,
}

pub const PROBLEM_NAMES: [&str; 6] = [
    "kinetics",
    "orego",
    "grayscott",
    "bouncing-ball",
    "linear-test",
    "split-linear",
];

/// Look up a built-in problem by name.
pub fn instance(name: &str, params: ProblemParams) -> Result<Instance> {
    match name {
        "kinetics" => {
            let k = params.k;
            Ok(Instance {
                name: "kinetics",
                problem: kinetics(k),
                u0: KINETICS_U0.to_vec(),
                exact: Some(Box::new(move |t| {
                    kinetics_exact(k, &KINETICS_U0, t).to_vec()
                })),
                events: None,
                default_dt: 1e-3,
                default_max_time: 20.0,
            })
        }
        "orego" => Ok(Instance {
            name: "orego",
            problem: orego(),
            u0: OREGO_U0.to_vec(),
            exact: None,
            events: None,
            default_dt: 0.1,
            default_max_time: 360.0,
        }),
        "grayscott" => Ok(Instance {
            name: "grayscott",
            problem: grayscott(params.grid),
            u0: grayscott_initial(params.grid),
            exact: None,
            events: None,
            default_dt: 0.5,
            default_max_time: 100.0,
        }),
        "bouncing-ball" => Ok(Instance {
            name: "bouncing-ball",
            problem: bouncing_ball(),
            u0: BOUNCING_BALL_U0.to_vec(),
            exact: None,
            events: Some(bouncing_ball_events()),
            default_dt: 0.01,
            default_max_time: 30.0,
        }),
        "linear-test" => {
            let lambda = params.lambda;
            Ok(Instance {
                name: "linear-test",
                problem: linear_test(lambda),
                u0: vec![1.0],
                exact: Some(Box::new(move |t| vec![(lambda * t).exp()])),
                events: None,
                default_dt: 0.01,
                default_max_time: 1.0,
            })
        }
        "split-linear" => {
            let total = params.stiff + params.lambda;
            Ok(Instance {
                name: "split-linear",
                problem: split_linear(params.stiff, params.lambda),
                u0: vec![1.0],
                exact: Some(Box::new(move |t| vec![(total * t).exp()])),
                events: None,
                default_dt: 0.01,
                default_max_time: 1.0,
            })
        }
        other => Err(Error::Config(format!(
            "unknown problem '{other}'; known problems: {}",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{self, jacobian_verify, FdParams};

    #[test]
    fn kinetics_exact_consistent_with_rate_law() {
        // Central difference of the closed form must reproduce -k u0 u1.
        let k = KINETICS_K;
        for &t in &[0.1, 1.0, 5.0, 20.0] {
            let d = 1e-6;
            let up = kinetics_exact(k, &KINETICS_U0, t + d);
            let um = kinetics_exact(k, &KINETICS_U0, t - d);
            let mid = kinetics_exact(k, &KINETICS_U0, t);
            let dudt = (up[0] - um[0]) / (2.0 * d);
            let rate = -k * mid[0] * mid[1];
            assert!(
                (dudt - rate).abs() <= 1e-7 * rate.abs().max(1e-3),
                "t={t}: {dudt} vs {rate}"
            );
        }
    }

    #[test]
    fn kinetics_exact_conservation() {
        let k = KINETICS_K;
        for &t in &[0.5, 3.0, 17.0] {
            let u = kinetics_exact(k, &KINETICS_U0, t);
            assert!((u[0] - u[1] - 0.3).abs() <= 1e-14);
            assert!((u[1] + u[2] - 0.7).abs() <= 1e-14);
            assert!(u.iter().all(|&x| x >= -1e-15));
        }
    }

    #[test]
    fn kinetics_equal_start_degenerate_branch() {
        let u0 = [0.5, 0.5, 0.0];
        let u = kinetics_exact(1.0, &u0, 2.0);
        // Equal concentrations decay as u0/(1 + u0 k t).
        assert!((u[0] - 0.5 / (1.0 + 0.5 * 2.0)).abs() <= 1e-14);
        assert_eq!(u[0], u[1]);
    }

    #[test]
    fn kinetics_declared_jacobian_verifies() {
        let p = kinetics(KINETICS_K);
        let rep = jacobian_verify(&p, 0.0, &[1.0, 0.7, 0.0], &[0.0; 3], 0.0).unwrap();
        assert!(rep.max_rel_diff < 1e-5, "rel diff {}", rep.max_rel_diff);
        let rep = jacobian_verify(&p, 0.0, &[0.4, 0.1, 0.6], &[0.1, 0.1, -0.1], 7.3).unwrap();
        assert!(rep.max_rel_diff < 1e-5, "rel diff {}", rep.max_rel_diff);
    }

    #[test]
    fn orego_rhs_at_initial_point() {
        let p = orego();
        let f = p.total_rhs(0.0, &OREGO_U0).unwrap();
        assert!((f[0] - 77.27 * (2.0 + (1.0 - 8.375e-6 - 2.0))).abs() <= 1e-12);
        assert!((f[1] - (3.0 - 4.0) / 77.27).abs() <= 1e-15);
        assert!((f[2] - 0.161 * (1.0 - 3.0)).abs() <= 1e-15);
    }

    #[test]
    fn orego_declared_jacobian_verifies() {
        let p = orego();
        let rep = jacobian_verify(&p, 0.0, &OREGO_U0, &[0.0; 3], 3.7).unwrap();
        assert!(rep.max_rel_diff < 1e-5, "rel diff {}", rep.max_rel_diff);
    }

    #[test]
    fn grayscott_uniform_background_is_equilibrium() {
        let n = 6;
        let p = grayscott(n);
        let mut state = vec![0.0; 2 * n * n];
        state[..n * n].fill(1.0);
        let f = p.eval_rhs(0.0, &state).unwrap();
        assert!(f.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn grayscott_stencil_wraps_periodically() {
        let n = 5;
        let p = grayscott(n);
        let mut base = vec![0.0; 2 * n * n];
        base[..n * n].fill(1.0);
        let f0 = p.eval_rhs(0.0, &base).unwrap();
        let delta = 1e-3;
        let mut bumped = base.clone();
        bumped[0] += delta; // cell (0,0) of u
        let f1 = p.eval_rhs(0.0, &bumped).unwrap();
        let h = 2.5 / n as f64;
        let d_over_h2 = 8.0e-5 / (h * h);
        // Periodic neighbors of (0,0): (1,0), (n-1,0), (0,1), (0,n-1).
        for k in [n, (n - 1) * n, 1, n - 1] {
            assert!(
                ((f1[k] - f0[k]) - d_over_h2 * delta).abs() <= 1e-12,
                "neighbor {k}"
            );
        }
        let self_change = -4.0 * d_over_h2 * delta - 0.024 * delta;
        assert!(((f1[0] - f0[0]) - self_change).abs() <= 1e-12);
    }

    #[test]
    fn grayscott_declared_jacobian_verifies() {
        let n = 4;
        let p = grayscott(n);
        let state = grayscott_initial(n);
        let user = p.eval_rhsjacobian(0.0, &state).unwrap();
        let fd = linalg::fd_jacobian(
            |t, x| p.eval_rhs(t, x).unwrap(),
            0.0,
            &state,
            FdParams::for_state(&state),
        );
        let mut worst = 0.0f64;
        let mut at = (0, 0, 0.0, 0.0);
        for i in 0..user.rows() {
            for j in 0..user.cols() {
                let a = user.get(i, j);
                let b = fd.get(i, j);
                // Floor above one-sided truncation noise (~1e-8 absolute on
                // the quadratic reaction term at v = 0).
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-3);
                if rel > worst {
                    worst = rel;
                    at = (i, j, a, b);
                }
            }
        }
        assert!(
            worst < 1e-4,
            "worst rel diff {worst} at ({}, {}): declared {} vs fd {}",
            at.0,
            at.1,
            at.2,
            at.3
        );
    }

    #[test]
    fn ball_dynamics_and_impact_handler() {
        let p = bouncing_ball();
        assert_eq!(p.total_rhs(0.0, &[10.0, 0.0]).unwrap(), vec![0.0, -9.8]);
        let mut ev = bouncing_ball_events();
        let mut u = vec![1e-12, -14.0];
        ev.run_post_event(&[0], 10.0 / 7.0, &mut u, true);
        assert_eq!(u[1], 0.9 * 14.0);
    }

    #[test]
    fn split_linear_partition() {
        let p = split_linear(-1000.0, 1.0);
        let u = [2.0];
        // Residual side carries the stiff part only.
        let f = p.eval_ifunction(0.0, &u, &[0.0]).unwrap();
        assert_eq!(f, vec![2000.0]);
        assert_eq!(p.eval_rhs(0.0, &u).unwrap(), vec![2.0]);
        // Combined dynamics: udot = -999 u.
        assert_eq!(p.total_rhs(0.0, &u).unwrap(), vec![-1998.0]);
    }

    #[test]
    fn catalog_lookup() {
        let inst = instance("kinetics", ProblemParams::default()).unwrap();
        assert_eq!(inst.u0, KINETICS_U0.to_vec());
        assert!(inst.exact.is_some());
        let exact = inst.exact.as_ref().unwrap()(0.0);
        assert_eq!(exact, KINETICS_U0.to_vec());

        let ball = instance("bouncing-ball", ProblemParams::default()).unwrap();
        assert!(ball.events.is_some());

        let err = match instance("oregano", ProblemParams::default()) {
            Err(e) => e,
            Ok(_) => panic!("unknown problem name must be rejected"),
        };
        assert!(err.to_string().contains("orego"));
    }
}
