//! Method coefficients: Butcher tableaux, IMEX pairs, Rosenbrock-W tables,
//! BDF weight generation, and the order-condition checker that certifies all
//! of them. The checker is the authority: every registered coefficient set
//! must pass its declared order within 1e-12 or the registry is wrong.

pub mod order;
pub mod registry;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// A Runge-Kutta tableau (A, b, c), optionally with embedded weights for
/// error estimation and a dense-output polynomial.
#[derive(Debug, Clone)]
pub struct ButcherTableau {
    pub name: String,
    pub order: usize,
    pub embedded_order: Option<usize>,
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub b_embedded: Option<Vec<f64>>,
    /// Dense-output coefficients, row j holding the polynomial for stage j:
    /// `B*_j(theta) = sum_k binterp[j][k] * theta^(k+1)`.
    pub binterp: Option<DenseMatrix>,
}

impl ButcherTableau {
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// True when A is strictly lower triangular.
    pub fn is_explicit(&self) -> bool {
        let s = self.stages();
        for i in 0..s {
            for j in i..s {
                if self.a.get(i, j) != 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// `b - b_embedded` componentwise; the error estimate is
    /// `dt * sum_j (b_j - bhat_j) * slope_j`.
    pub fn error_weights(&self) -> Option<Vec<f64>> {
        self.b_embedded
            .as_ref()
            .map(|bh| self.b.iter().zip(bh).map(|(x, y)| x - y).collect())
    }

    /// Evaluate the dense-output weights `B*(theta)`. `theta` past 1 is
    /// allowed (extrapolation for predictor use).
    pub fn dense_weights(&self, theta: f64) -> Result<Vec<f64>> {
        let bi = self
            .binterp
            .as_ref()
            .ok_or(Error::MissingCallback("dense-output polynomial b*"))?;
        Ok(eval_binterp(bi, theta))
    }

    /// Adjust the highest-degree coefficients so that `B*(1) = b` holds
    /// exactly as stored, then attach.
    pub fn with_binterp(mut self, mut binterp: DenseMatrix) -> Self {
        let deg = binterp.cols();
        for j in 0..self.stages() {
            let mut sum = 0.0;
            for k in 0..deg {
                sum += binterp.get(j, k);
            }
            binterp.add_to(j, deg - 1, self.b[j] - sum);
        }
        self.binterp = Some(binterp);
        self
    }

    /// Quadratic interpolant available to any embedded explicit pair:
    /// `B*_j = theta*(1-theta)*e_1 + theta^2*b_j`. First order in theta,
    /// second order in the step, exact at both endpoints.
    pub fn with_default_quadratic_binterp(self) -> Self {
        let s = self.stages();
        let mut bi = DenseMatrix::zeros(s, 2);
        for j in 0..s {
            let d1 = if j == 0 { 1.0 } else { 0.0 };
            bi.set(j, 0, d1);
            bi.set(j, 1, self.b[j] - d1);
        }
        self.with_binterp(bi)
    }
}

/// Evaluate each row's dense-output polynomial at `theta`. Rows hold
/// coefficients lowest power first; there is no constant term.
pub fn eval_binterp(binterp: &DenseMatrix, theta: f64) -> Vec<f64> {
    let s = binterp.rows();
    let deg = binterp.cols();
    let mut w = vec![0.0; s];
    for (j, wj) in w.iter_mut().enumerate() {
        // Horner in theta; the polynomial has no constant term.
        let mut acc = 0.0;
        for k in (0..deg).rev() {
            acc = acc * theta + binterp.get(j, k);
        }
        *wj = acc * theta;
    }
    w
}

/// An additive pair sharing abscissae: explicit table for the nonstiff part,
/// diagonally implicit table for the stiff part.
#[derive(Debug, Clone)]
pub struct ImexTableau {
    pub name: String,
    pub order: usize,
    pub embedded_order: Option<usize>,
    pub a_explicit: DenseMatrix,
    pub a_implicit: DenseMatrix,
    pub b_explicit: Vec<f64>,
    pub b_implicit: Vec<f64>,
    /// Shared embedded weights (the pairs used here publish one b-hat).
    pub b_embedded: Option<Vec<f64>>,
    pub c: Vec<f64>,
    /// Shared dense-output polynomial applied to both slope families.
    pub binterp: Option<DenseMatrix>,
}

impl ImexTableau {
    pub fn stages(&self) -> usize {
        self.c.len()
    }

    pub fn dense_weights(&self, theta: f64) -> Result<Vec<f64>> {
        let bi = self
            .binterp
            .as_ref()
            .ok_or(Error::MissingCallback("dense-output polynomial b*"))?;
        Ok(eval_binterp(bi, theta))
    }

    pub fn with_binterp(mut self, mut binterp: DenseMatrix) -> Self {
        // Enforce B*(1) = b_implicit exactly; the explicit completion shares
        // the polynomial per the additive dense-output convention.
        let deg = binterp.cols();
        for j in 0..self.stages() {
            let mut sum = 0.0;
            for k in 0..deg {
                sum += binterp.get(j, k);
            }
            binterp.add_to(j, deg - 1, self.b_implicit[j] - sum);
        }
        self.binterp = Some(binterp);
        self
    }
}

/// Rosenbrock-W coefficients in the (A, Gamma, b) form.
#[derive(Debug, Clone)]
pub struct RoswTableau {
    pub name: String,
    pub order: usize,
    pub embedded_order: Option<usize>,
    pub a: DenseMatrix,
    pub gamma: DenseMatrix,
    pub b: Vec<f64>,
    pub b_embedded: Option<Vec<f64>>,
    /// Retains design order with an approximate (even stale) Jacobian.
    pub w_method: bool,
    pub l_stable: bool,
}

impl RoswTableau {
    pub fn stages(&self) -> usize {
        self.b.len()
    }
}

/// Coefficients after the change of variables that folds Gamma into the
/// stage vectors: one linear solve per stage instead of Gamma-coupled
/// combinations.
#[derive(Debug, Clone)]
pub struct RoswTransformed {
    pub stages: usize,
    /// `A * Gamma^-1`, strictly lower: stage-state combination weights.
    pub omega: DenseMatrix,
    /// `diag(1/gamma_ii) - Gamma^-1`, strictly lower: slope-history weights.
    pub d: DenseMatrix,
    /// `b * Gamma^-1`: completion weights.
    pub m: Vec<f64>,
    pub m_embedded: Option<Vec<f64>>,
    /// Row sums of A: abscissae.
    pub c: Vec<f64>,
    /// Diagonal after substituting gamma-hat into explicit rows.
    pub gamma_diag: Vec<f64>,
    /// Rows whose original diagonal was zero: no linear solve there.
    pub explicit_row: Vec<bool>,
    /// All implicit diagonals equal: one factorization per step suffices.
    pub single_diagonal: bool,
}

/// Invert Gamma (lower triangular) and fold it into the other coefficients.
///
/// Zero-diagonal rows are flagged explicit: gamma-hat (the first nonzero
/// diagonal) is substituted to keep the matrix invertible, and the stepper
/// handles those rows without a linear solve. A Gamma with no nonzero
/// diagonal at all is structurally singular and rejected.
pub fn ros_transform(tab: &RoswTableau) -> Result<RoswTransformed> {
    let s = tab.stages();
    let g = &tab.gamma;
    let mut explicit_row = vec![false; s];
    let mut gamma_hat = 0.0;
    for i in 0..s {
        if g.get(i, i) == 0.0 {
            explicit_row[i] = true;
        } else if gamma_hat == 0.0 {
            gamma_hat = g.get(i, i);
        }
        for j in (i + 1)..s {
            if g.get(i, j) != 0.0 {
                return Err(Error::Config(format!(
                    "Gamma of {} is not lower triangular",
                    tab.name
                )));
            }
        }
    }
    if gamma_hat == 0.0 {
        return Err(Error::Config(format!(
            "Gamma of {} has no nonzero diagonal entry",
            tab.name
        )));
    }

    let mut gt = g.clone();
    let mut gamma_diag = vec![0.0; s];
    for i in 0..s {
        if explicit_row[i] {
            gt.set(i, i, gamma_hat);
        }
        gamma_diag[i] = gt.get(i, i);
    }

    // Forward substitution, column by column: gt * inv = I.
    let mut inv = DenseMatrix::zeros(s, s);
    for col in 0..s {
        for i in col..s {
            let mut acc = if i == col { 1.0 } else { 0.0 };
            for j in col..i {
                acc -= gt.get(i, j) * inv.get(j, col);
            }
            inv.set(i, col, acc / gt.get(i, i));
        }
    }

    let omega = mat_mul(&tab.a, &inv);
    let mut d = DenseMatrix::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            let diag = if i == j { 1.0 / gamma_diag[i] } else { 0.0 };
            d.set(i, j, diag - inv.get(i, j));
        }
    }
    let m = inv.matvec_transpose(&tab.b);
    let m_embedded = tab.b_embedded.as_ref().map(|bh| inv.matvec_transpose(bh));
    let mut c = vec![0.0; s];
    for i in 0..s {
        c[i] = tab.a.row(i).iter().sum();
    }
    let implicit_diags: Vec<f64> = (0..s)
        .filter(|&i| !explicit_row[i])
        .map(|i| gamma_diag[i])
        .collect();
    let single_diagonal = implicit_diags
        .windows(2)
        .all(|w| w[0] == w[1]);

    Ok(RoswTransformed {
        stages: s,
        omega,
        d,
        m,
        m_embedded,
        c,
        gamma_diag,
        explicit_row,
        single_diagonal,
    })
}

fn mat_mul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = DenseMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for l in 0..k {
                acc += a.get(i, l) * b.get(l, j);
            }
            out.set(i, j, acc);
        }
    }
    out
}

/// Derivative weights for variable-step BDF: given nodes
/// `times = [t_{n+1}, t_n, ..., t_{n+1-q}]` (strictly decreasing), returns
/// `alpha` such that `sum_j alpha_j * p(times[j]) = p'(times[0])` for every
/// polynomial of degree <= q.
pub fn bdf_weights(times: &[f64]) -> Vec<f64> {
    let q1 = times.len();
    let mut alpha = vec![0.0; q1];
    let t0 = times[0];
    // L_j'(t0): only the factor pair that cancels (x - t0) survives.
    for j in 1..q1 {
        let mut num = 1.0;
        let mut den = 1.0;
        for (k, &tk) in times.iter().enumerate() {
            if k == j {
                continue;
            }
            if k != 0 {
                num *= t0 - tk;
            }
            den *= times[j] - tk;
        }
        alpha[j] = num / den;
    }
    alpha[0] = times[1..].iter().map(|&tm| 1.0 / (t0 - tm)).sum();
    alpha
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_rosw_tab(gamma: f64) -> RoswTableau {
        RoswTableau {
            name: "one-stage".into(),
            order: 1,
            embedded_order: None,
            a: DenseMatrix::zeros(1, 1),
            gamma: DenseMatrix::from_rows(&[vec![gamma]]),
            b: vec![1.0],
            b_embedded: None,
            w_method: false,
            l_stable: true,
        }
    }

    #[test]
    fn one_stage_transform() {
        let tr = ros_transform(&scalar_rosw_tab(0.25)).unwrap();
        assert_eq!(tr.m, vec![4.0]);
        assert_eq!(tr.omega.get(0, 0), 0.0);
        assert_eq!(tr.d.get(0, 0), 0.0);
        assert!(tr.single_diagonal);
    }

    #[test]
    fn diagonal_gamma_divides_cleanly() {
        // Gamma = g*I: omega = A/g, m = b/g, d = 0.
        let g = 0.5;
        let tab = RoswTableau {
            name: "diag".into(),
            order: 2,
            embedded_order: None,
            a: DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.8, 0.0]]),
            gamma: DenseMatrix::from_rows(&[vec![g, 0.0], vec![0.0, g]]),
            b: vec![0.25, 0.75],
            b_embedded: None,
            w_method: false,
            l_stable: false,
        };
        let tr = ros_transform(&tab).unwrap();
        assert_eq!(tr.omega.get(1, 0), 0.8 / g);
        assert_eq!(tr.m, vec![0.25 / g, 0.75 / g]);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(tr.d.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn transform_round_trips_through_gamma() {
        let tab = registry::rosw_ra3pw();
        let tr = ros_transform(&tab).unwrap();
        // omega * Gamma must recover A.
        let back = mat_mul(&tr.omega, &tab.gamma);
        for i in 0..tab.stages() {
            for j in 0..tab.stages() {
                assert!(
                    (back.get(i, j) - tab.a.get(i, j)).abs() < 1e-13,
                    "A round-trip failed at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn all_zero_gamma_rejected() {
        let mut tab = scalar_rosw_tab(0.0);
        tab.gamma = DenseMatrix::zeros(1, 1);
        assert!(ros_transform(&tab).is_err());
    }

    #[test]
    fn zero_diagonal_row_flagged_explicit() {
        let tab = RoswTableau {
            name: "exp-first".into(),
            order: 1,
            embedded_order: None,
            a: DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.5, 0.0]]),
            gamma: DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![-0.3, 0.4]]),
            b: vec![0.5, 0.5],
            b_embedded: None,
            w_method: false,
            l_stable: false,
        };
        let tr = ros_transform(&tab).unwrap();
        assert_eq!(tr.explicit_row, vec![true, false]);
        assert_eq!(tr.gamma_diag, vec![0.4, 0.4]);
        assert!(tr.single_diagonal);
    }

    #[test]
    fn dense_weights_hit_endpoints() {
        let tab = registry::erk_rk3bs();
        let w0 = tab.dense_weights(0.0).unwrap();
        assert!(w0.iter().all(|&x| x == 0.0));
        let w1 = tab.dense_weights(1.0).unwrap();
        for (wj, bj) in w1.iter().zip(&tab.b) {
            assert_eq!(wj, bj, "B*(1) must equal b exactly as stored");
        }
    }

    #[test]
    fn quadratic_interpolant_midpoint_weights() {
        // theta=0.5: B*_1 = 0.25 + 0.25*b_1, others 0.25*b_j.
        let tab = registry::erk_rk3bs();
        let w = tab.dense_weights(0.5).unwrap();
        assert!((w[0] - (0.25 + 0.25 * (tab.b[0] - 1.0) + 0.25)).abs() < 1e-15);
        for j in 1..tab.stages() {
            assert!((w[j] - 0.25 * tab.b[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn dense_weights_missing_polynomial_errors() {
        let tab = registry::erk_rk4();
        assert!(tab.dense_weights(0.5).is_err());
    }

    #[test]
    fn bdf_weights_uniform_grid_bdf2() {
        // Uniform spacing h: alpha = [3/(2h), -2/h, 1/(2h)].
        let h = 0.1;
        let a = bdf_weights(&[0.2, 0.1, 0.0]);
        assert!((a[0] - 1.5 / h).abs() < 1e-12);
        assert!((a[1] + 2.0 / h).abs() < 1e-12);
        assert!((a[2] - 0.5 / h).abs() < 1e-12);
    }

    #[test]
    fn bdf_weights_differentiate_polynomials_exactly() {
        // Nonuniform nodes; exactness for degree <= q is the defining
        // property of the weights.
        let times = [1.0, 0.93, 0.81, 0.66, 0.5, 0.31, 0.1];
        for q in 1..=6 {
            let nodes = &times[..q + 1];
            let alpha = bdf_weights(nodes);
            for deg in 0..=q {
                let p = |t: f64| t.powi(deg as i32);
                let dp = if deg == 0 {
                    0.0
                } else {
                    deg as f64 * nodes[0].powi(deg as i32 - 1)
                };
                let got: f64 = alpha
                    .iter()
                    .zip(nodes)
                    .map(|(a, &t)| a * p(t))
                    .sum();
                assert!(
                    (got - dp).abs() < 1e-9 * (1.0 + dp.abs()),
                    "q={q} deg={deg}: {got} vs {dp}"
                );
            }
        }
    }
}
