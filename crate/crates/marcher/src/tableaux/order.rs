//! Rooted-tree order conditions for RK, Rosenbrock, and additive pairs.
//!
//! The registry treats this module as the authority over transcribed
//! coefficients: a tableau that fails its declared order here is wrong no
//! matter what the source says.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::{ButcherTableau, ImexTableau, RoswTableau};

/// One order condition and how badly the coefficients miss it.
#[derive(Debug, Clone)]
pub struct ConditionResidual {
    pub condition: String,
    pub order: usize,
    pub residual: f64,
}

pub fn max_residual(conds: &[ConditionResidual]) -> f64 {
    conds.iter().map(|c| c.residual.abs()).fold(0.0, f64::max)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn hadamard(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a * b).collect()
}

fn powv(x: &[f64], k: i32) -> Vec<f64> {
    x.iter().map(|a| a.powi(k)).collect()
}

/// Rooted-tree conditions for a plain RK method, all trees through order 5.
pub fn check_rk(
    a: &DenseMatrix,
    b: &[f64],
    c: &[f64],
    up_to: usize,
) -> Result<Vec<ConditionResidual>> {
    if up_to > 5 {
        return Err(Error::Config(
            "order conditions are tabulated through order 5".into(),
        ));
    }
    let mut out = Vec::new();
    let mut push = |label: &str, order: usize, value: f64, target: f64| {
        out.push(ConditionResidual {
            condition: label.to_string(),
            order,
            residual: value - target,
        });
    };
    let ones = vec![1.0; b.len()];
    push("sum(b)", 1, dot(b, &ones), 1.0);
    if up_to >= 2 {
        push("b.c", 2, dot(b, c), 1.0 / 2.0);
    }
    if up_to >= 3 {
        let ac = a.matvec(c);
        push("b.c^2", 3, dot(b, &powv(c, 2)), 1.0 / 3.0);
        push("b.Ac", 3, dot(b, &ac), 1.0 / 6.0);
    }
    if up_to >= 4 {
        let ac = a.matvec(c);
        push("b.c^3", 4, dot(b, &powv(c, 3)), 1.0 / 4.0);
        push("(b*c).Ac", 4, dot(&hadamard(b, c), &ac), 1.0 / 8.0);
        push("b.Ac^2", 4, dot(b, &a.matvec(&powv(c, 2))), 1.0 / 12.0);
        push("b.AAc", 4, dot(b, &a.matvec(&ac)), 1.0 / 24.0);
    }
    if up_to >= 5 {
        let ac = a.matvec(c);
        let ac2 = a.matvec(&powv(c, 2));
        let aac = a.matvec(&ac);
        push("b.c^4", 5, dot(b, &powv(c, 4)), 1.0 / 5.0);
        push("(b*c^2).Ac", 5, dot(&hadamard(b, &powv(c, 2)), &ac), 1.0 / 10.0);
        push("b.(c*Ac^2)", 5, dot(b, &hadamard(c, &ac2)), 1.0 / 15.0);
        push("(b*c).AAc", 5, dot(&hadamard(b, c), &aac), 1.0 / 30.0);
        push("b.(Ac)^2", 5, dot(b, &hadamard(&ac, &ac)), 1.0 / 20.0);
        push("b.Ac^3", 5, dot(b, &a.matvec(&powv(c, 3))), 1.0 / 20.0);
        push("b.A(c*Ac)", 5, dot(b, &a.matvec(&hadamard(c, &ac))), 1.0 / 40.0);
        push("b.AAc^2", 5, dot(b, &a.matvec(&ac2)), 1.0 / 60.0);
        push("b.AAAc", 5, dot(b, &a.matvec(&aac)), 1.0 / 120.0);
    }
    Ok(out)
}

/// Conditions for the weight vector of a Butcher tableau (primary or
/// embedded) at the given order.
pub fn check_rk_tableau(tab: &ButcherTableau, weights: &[f64], up_to: usize) -> Result<Vec<ConditionResidual>> {
    check_rk(&tab.a, weights, &tab.c, up_to)
}

/// Rosenbrock conditions (exact-Jacobian ROW theory) through order 3,
/// written with beta = A + Gamma so the diagonal participates.
pub fn check_rosw(tab: &RoswTableau, weights: &[f64], up_to: usize) -> Result<Vec<ConditionResidual>> {
    if up_to > 3 {
        return Err(Error::Config(
            "Rosenbrock conditions are tabulated through order 3".into(),
        ));
    }
    let s = tab.stages();
    let mut beta = tab.a.clone();
    beta.add_scaled(1.0, &tab.gamma);
    let mut beta_sum = vec![0.0; s];
    let mut c = vec![0.0; s];
    for i in 0..s {
        beta_sum[i] = beta.row(i).iter().sum();
        c[i] = tab.a.row(i).iter().sum();
    }
    let mut out = Vec::new();
    let mut push = |label: &str, order: usize, value: f64, target: f64| {
        out.push(ConditionResidual {
            condition: label.to_string(),
            order,
            residual: value - target,
        });
    };
    let ones = vec![1.0; s];
    push("sum(b)", 1, dot(weights, &ones), 1.0);
    if up_to >= 2 {
        push("b.(A+G)e", 2, dot(weights, &beta_sum), 1.0 / 2.0);
    }
    if up_to >= 3 {
        push("b.c^2", 3, dot(weights, &powv(&c, 2)), 1.0 / 3.0);
        push("b.(A+G)(A+G)e", 3, dot(weights, &beta.matvec(&beta_sum)), 1.0 / 6.0);
    }
    Ok(out)
}

/// Conditions for an additive pair through order 4: each part as a plain RK
/// method plus every mixed-label coupling tree.
pub fn check_imex(tab: &ImexTableau, up_to: usize) -> Result<Vec<ConditionResidual>> {
    if up_to > 4 {
        return Err(Error::Config(
            "IMEX coupling conditions are tabulated through order 4".into(),
        ));
    }
    let c = &tab.c;
    let parts: [(&str, &DenseMatrix); 2] =
        [("AE", &tab.a_explicit), ("AI", &tab.a_implicit)];
    let weights: [(&str, &Vec<f64>); 2] =
        [("bE", &tab.b_explicit), ("bI", &tab.b_implicit)];
    let mut out = Vec::new();
    let ones = vec![1.0; c.len()];
    for (bn, b) in &weights {
        let mut push = |label: String, order: usize, value: f64, target: f64| {
            out.push(ConditionResidual {
                condition: label,
                order,
                residual: value - target,
            });
        };
        push(format!("{bn}: sum"), 1, dot(b, &ones), 1.0);
        if up_to >= 2 {
            push(format!("{bn}: b.c"), 2, dot(b, c), 1.0 / 2.0);
        }
        if up_to >= 3 {
            push(format!("{bn}: b.c^2"), 3, dot(b, &powv(c, 2)), 1.0 / 3.0);
            for (an, a) in &parts {
                push(format!("{bn}: b.{an}c"), 3, dot(b, &a.matvec(c)), 1.0 / 6.0);
            }
        }
        if up_to >= 4 {
            push(format!("{bn}: b.c^3"), 4, dot(b, &powv(c, 3)), 1.0 / 4.0);
            for (an, a) in &parts {
                let ac = a.matvec(c);
                push(
                    format!("{bn}: (b*c).{an}c"),
                    4,
                    dot(&hadamard(b, c), &ac),
                    1.0 / 8.0,
                );
                push(
                    format!("{bn}: b.{an}c^2"),
                    4,
                    dot(b, &a.matvec(&powv(c, 2))),
                    1.0 / 12.0,
                );
                for (an2, a2) in &parts {
                    push(
                        format!("{bn}: b.{an}{an2}c"),
                        4,
                        dot(b, &a.matvec(&a2.matvec(c))),
                        1.0 / 24.0,
                    );
                }
            }
        }
    }
    Ok(out)
}
