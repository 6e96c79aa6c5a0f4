//! Dense LU factorization and finite-difference Jacobians.
//!
//! The implicit steppers refactor small dense systems constantly, so the
//! factorization keeps the classic packed layout: `L` (unit diagonal, below)
//! and `U` (on and above) share one matrix, with LAPACK-style pivot indices.
//! A matrix is declared singular when a pivot falls below
//! `n * eps * norm_inf(A)`, which is the cheapest threshold that still
//! distinguishes "rank deficient" from "badly scaled".

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::problem::Problem;

/// Packed LU factors of a square matrix with partial pivoting.
#[derive(Debug, Clone)]
pub struct LuFactors {
    /// `L\U` packed in one matrix; `L` has an implicit unit diagonal.
    factors: DenseMatrix,
    /// `pivots[k]` is the row swapped with row `k` at elimination step `k`.
    pivots: Vec<usize>,
}

impl LuFactors {
    pub fn order(&self) -> usize {
        self.factors.rows()
    }

    pub fn factors(&self) -> &DenseMatrix {
        &self.factors
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }
}

/// Factor `a` in place with partial pivoting.
pub fn lu_factor(a: DenseMatrix) -> Result<LuFactors> {
    assert_eq!(a.rows(), a.cols(), "lu_factor requires a square matrix");
    let n = a.rows();
    let threshold = n as f64 * f64::EPSILON * a.norm_inf();
    let mut m = a;
    let mut pivots = vec![0usize; n];

    for k in 0..n {
        // Pick the largest magnitude in column k at or below the diagonal.
        let mut p = k;
        let mut best = m.get(k, k).abs();
        for i in (k + 1)..n {
            let v = m.get(i, k).abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        pivots[k] = p;
        if p != k {
            for j in 0..n {
                let a = m.get(k, j);
                let b = m.get(p, j);
                m.set(k, j, b);
                m.set(p, j, a);
            }
        }
        let pivot = m.get(k, k);
        if pivot.abs() <= threshold || !pivot.is_finite() {
            return Err(Error::SingularMatrix { pivot_index: k });
        }
        for i in (k + 1)..n {
            let l = m.get(i, k) / pivot;
            m.set(i, k, l);
            if l != 0.0 {
                for j in (k + 1)..n {
                    let v = m.get(i, j) - l * m.get(k, j);
                    m.set(i, j, v);
                }
            }
        }
    }
    Ok(LuFactors { factors: m, pivots })
}

/// Solve `A x = b` with precomputed factors.
pub fn lu_solve(lu: &LuFactors, b: &[f64]) -> Vec<f64> {
    let n = lu.order();
    assert_eq!(b.len(), n, "lu_solve rhs length mismatch");
    let mut x = b.to_vec();
    for k in 0..n {
        let p = lu.pivots[k];
        if p != k {
            x.swap(k, p);
        }
    }
    // Forward substitution with the unit lower factor.
    for i in 1..n {
        let mut acc = x[i];
        for j in 0..i {
            acc -= lu.factors.get(i, j) * x[j];
        }
        x[i] = acc;
    }
    // Back substitution with the upper factor.
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in (i + 1)..n {
            acc -= lu.factors.get(i, j) * x[j];
        }
        x[i] = acc / lu.factors.get(i, i);
    }
    x
}

/// Solve `A^T x = b` reusing the factors of `A`.
///
/// Adjoint sweeps need exactly this: one factorization per step serves both
/// the forward linearization and its transpose.
pub fn lu_solve_transpose(lu: &LuFactors, b: &[f64]) -> Vec<f64> {
    let n = lu.order();
    assert_eq!(b.len(), n, "lu_solve_transpose rhs length mismatch");
    let mut x = b.to_vec();
    // U^T is lower triangular with the pivoted diagonal.
    for i in 0..n {
        let mut acc = x[i];
        for j in 0..i {
            acc -= lu.factors.get(j, i) * x[j];
        }
        x[i] = acc / lu.factors.get(i, i);
    }
    // L^T is unit upper triangular.
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in (i + 1)..n {
            acc -= lu.factors.get(j, i) * x[j];
        }
        x[i] = acc;
    }
    // Undo the row permutation: apply the recorded swaps in reverse.
    for k in (0..n).rev() {
        let p = lu.pivots[k];
        if p != k {
            x.swap(k, p);
        }
    }
    x
}

/// Increment rule for one-sided difference columns.
///
/// The default follows the usual sqrt(eps) scaling with a floor so that
/// components sitting at zero still get a sensible perturbation:
/// `h_j = rel * max(|u_j|, floor)`.
#[derive(Debug, Clone, Copy)]
pub struct FdParams {
    pub rel: f64,
    pub floor: f64,
}

impl FdParams {
    /// Floor at the overall state magnitude, so every column's increment is
    /// at least `rel * |u|_inf`. A smaller floor starves columns whose
    /// component sits at zero: the induced output change drops below the
    /// roundoff of O(|u|_inf)-sized function values and the quotient reads
    /// pure noise.
    pub fn for_state(u: &[f64]) -> Self {
        let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        FdParams {
            rel: f64::EPSILON.sqrt(),
            floor: umax + 1e-12,
        }
    }

    pub fn increment(&self, uj: f64) -> f64 {
        self.rel * uj.abs().max(self.floor)
    }
}

/// One-sided finite-difference Jacobian of `f(t, u)` with respect to `u`.
pub fn fd_jacobian<F>(f: F, t: f64, u: &[f64], params: FdParams) -> DenseMatrix
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let base = f(t, u);
    let m = base.len();
    let n = u.len();
    let mut jac = DenseMatrix::zeros(m, n);
    let mut up = u.to_vec();
    for j in 0..n {
        let h = params.increment(u[j]);
        // Reconstruct the rounded step so the quotient uses the exact delta.
        let uj = u[j];
        up[j] = uj + h;
        let h_actual = up[j] - uj;
        let fp = f(t, &up);
        up[j] = uj;
        for i in 0..m {
            jac.set(i, j, (fp[i] - base[i]) / h_actual);
        }
    }
    jac
}

/// Comparison of a user-declared shifted Jacobian against finite differences.
#[derive(Debug, Clone)]
pub struct JacobianReport {
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    /// Entry attaining the worst relative deviation.
    pub worst_entry: (usize, usize),
    pub user: DenseMatrix,
    pub fd: DenseMatrix,
}

/// Check `sigma * dF/dudot + dF/du` as declared by the problem against a
/// one-sided difference of `x -> F(t, x, udot + sigma*(x - u))`.
///
/// Differencing that composite map probes exactly the directional structure
/// the implicit steppers rely on, so a passing report means the declared
/// Jacobian is consistent with what Newton will see.
pub fn jacobian_verify(
    p: &Problem,
    t: f64,
    u: &[f64],
    udot: &[f64],
    shift: f64,
) -> Result<JacobianReport> {
    let user = p.eval_ijacobian(t, u, udot, shift)?;
    let u0 = u.to_vec();
    let udot0 = udot.to_vec();
    let composite = |tt: f64, x: &[f64]| -> Vec<f64> {
        let mut xdot = udot0.clone();
        for i in 0..xdot.len() {
            xdot[i] += shift * (x[i] - u0[i]);
        }
        p.eval_ifunction(tt, x, &xdot)
            .expect("residual evaluation failed inside jacobian_verify")
    };
    let fd = fd_jacobian(composite, t, u, FdParams::for_state(u));

    let scale = fd.max_abs().max(f64::MIN_POSITIVE);
    let rel_floor = 1e-8 * scale;
    let mut max_abs_diff = 0.0f64;
    let mut max_rel_diff = 0.0f64;
    let mut worst = (0, 0);
    for i in 0..user.rows() {
        for j in 0..user.cols() {
            let a = user.get(i, j);
            let b = fd.get(i, j);
            let diff = (a - b).abs();
            let denom = a.abs().max(b.abs()).max(rel_floor);
            let rel = diff / denom;
            if diff > max_abs_diff {
                max_abs_diff = diff;
            }
            if rel > max_rel_diff {
                max_rel_diff = rel;
                worst = (i, j);
            }
        }
    }
    Ok(JacobianReport {
        max_abs_diff,
        max_rel_diff,
        worst_entry: worst,
        user,
        fd,
    })
}
