//! Dense output over a single accepted step.
//!
//! Every stepper can describe the solution on [t_n, t_n + dt] as an
//! `Interpolant`, evaluated in the normalized coordinate theta in [0, 1].
//! Evaluation at theta = 0 and theta = 1 returns the stored endpoint states
//! bitwise; the polynomial forms are only used strictly inside the step, so
//! event location and final-time interpolation can never disagree with the
//! committed trajectory at step boundaries.

use crate::matrix::DenseMatrix;
use crate::tableaux::eval_binterp;

/// Piecewise description of u(t_n + theta * dt).
#[derive(Debug, Clone)]
pub enum Interpolant {
    /// Straight line between the endpoints. First-order accurate; the
    /// fallback when no slope information is available.
    Linear { u0: Vec<f64>, u1: Vec<f64> },
    /// Cubic Hermite from endpoint values and endpoint derivatives.
    /// `du0`/`du1` are true time derivatives (not premultiplied by dt).
    Hermite {
        u0: Vec<f64>,
        u1: Vec<f64>,
        du0: Vec<f64>,
        du1: Vec<f64>,
        dt: f64,
    },
    /// Stage-slope polynomial u0 + dt * sum_j B*_j(theta) k_j using the
    /// tableau's interpolation coefficients. The rows of `binterp` are
    /// per-stage polynomial coefficients, lowest power (theta^1) first.
    BStar {
        u0: Vec<f64>,
        u1: Vec<f64>,
        dt: f64,
        slopes: Vec<Vec<f64>>,
        binterp: DenseMatrix,
    },
}

impl Interpolant {
    pub fn eval(&self, theta: f64) -> Vec<f64> {
        match self {
            Interpolant::Linear { u0, u1 } => {
                if theta == 0.0 {
                    return u0.clone();
                }
                if theta == 1.0 {
                    return u1.clone();
                }
                u0.iter()
                    .zip(u1)
                    .map(|(&a, &b)| a + theta * (b - a))
                    .collect()
            }
            Interpolant::Hermite { u0, u1, du0, du1, dt } => {
                if theta == 0.0 {
                    return u0.clone();
                }
                if theta == 1.0 {
                    return u1.clone();
                }
                let t2 = theta * theta;
                let t3 = t2 * theta;
                let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
                let h10 = t3 - 2.0 * t2 + theta;
                let h01 = -2.0 * t3 + 3.0 * t2;
                let h11 = t3 - t2;
                (0..u0.len())
                    .map(|i| {
                        h00 * u0[i] + h10 * dt * du0[i] + h01 * u1[i] + h11 * dt * du1[i]
                    })
                    .collect()
            }
            Interpolant::BStar { u0, u1, dt, slopes, binterp } => {
                if theta == 0.0 {
                    return u0.clone();
                }
                if theta == 1.0 {
                    return u1.clone();
                }
                let w = eval_binterp(binterp, theta);
                let mut out = u0.clone();
                for (j, k) in slopes.iter().enumerate() {
                    let c = dt * w[j];
                    for (o, &kj) in out.iter_mut().zip(k) {
                        *o += c * kj;
                    }
                }
                out
            }
        }
    }
}
