//! Dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for pseudo-inverses and numerical rank.
pub const RANK_RTOL: f64 = 1e-8;

/// Moore-Penrose pseudo-inverse with a relative singular value cutoff.
pub fn pinv(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = if smax > 0.0 { smax * rtol } else { 0.0 };
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (vt.row(i).transpose() / s) * u.column(i).transpose();
        }
    }
    out
}

/// Numerical rank: singular values above `rtol * s_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > smax * rtol).count()
}

/// Orthogonal projector onto the complement of the column space of `X`,
/// `W = I - X (X'X)^- X'`, applied implicitly.
#[derive(Debug, Clone)]
pub struct Projector {
    x: DMatrix<f64>,
    xtx_pinv: DMatrix<f64>,
}

impl Projector {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let xtx = x.transpose() * x;
        Self { x: x.clone(), xtx_pinv: pinv(&xtx, RANK_RTOL) }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.x.ncols() == 0 {
            return v.clone();
        }
        let coef = &self.xtx_pinv * (self.x.transpose() * v);
        v - &self.x * coef
    }

    pub fn apply_matrix(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        if self.x.ncols() == 0 {
            return a.clone();
        }
        let coef = &self.xtx_pinv * (self.x.transpose() * a);
        a - &self.x * coef
    }

    /// Least-squares coefficients of `v` on the columns of `X`.
    pub fn coefficients(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.xtx_pinv * (self.x.transpose() * v)
    }

    /// Explicit n x n matrix form of `W`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.x.nrows();
        self.apply_matrix(&DMatrix::identity(n, n))
    }
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Hager's estimate of `||A^{-1}||_1` given solvers for `A` and `A'`.
fn inverse_one_norm_estimate<F, G>(n: usize, solve: F, solve_t: G) -> Option<f64>
where
    F: Fn(&DVector<f64>) -> Option<DVector<f64>>,
    G: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let y = solve(&x)?;
        let new_est = y.iter().map(|v| v.abs()).sum::<f64>();
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = solve_t(&xi)?;
        let (jmax, zmax) = z.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (j, v)| {
            if v.abs() > acc.1 {
                (j, v.abs())
            } else {
                acc
            }
        });
        if new_est <= est || zmax <= z.dot(&x) {
            est = est.max(new_est);
            break;
        }
        est = new_est;
        x = DVector::zeros(n);
        x[jmax] = 1.0;
    }
    // Higham's alternating-sign safeguard vector.
    let alt = DVector::from_fn(n, |i, _| {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
    });
    let y = solve(&alt)?;
    let alt_est = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
    Some(est.max(alt_est))
}

/// Dense LU solve of `A x = b` guarded by a 1-norm condition estimate.
///
/// Returns the solution and the condition estimate.
pub fn guarded_solve(a: &DMatrix<f64>, b: &DVector<f64>, cond_limit: f64) -> Result<(DVector<f64>, f64)> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Dimension(format!("system {}x{} with rhs {}", n, a.ncols(), b.len())));
    }
    let cond = condition_estimate(a)?;
    if !(cond <= cond_limit) {
        return Err(Error::IllConditioned { condition: cond, limit: cond_limit });
    }
    let lu = a.clone().lu();
    let x = lu.solve(b).ok_or_else(|| Error::Singular("LU solve failed".into()))?;
    Ok((x, cond))
}

/// 1-norm condition estimate `||A||_1 ||A^{-1}||_1` (infinite when singular).
pub fn condition_estimate(a: &DMatrix<f64>) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension("condition estimate needs a square matrix".into()));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let lu = a.clone().lu();
    if !lu.is_invertible() {
        return Ok(f64::INFINITY);
    }
    let lu_t = a.transpose().lu();
    let inv_norm = inverse_one_norm_estimate(n, |v| lu.solve(v), |v| lu_t.solve(v));
    Ok(match inv_norm {
        Some(v) if v.is_finite() => one_norm(a) * v,
        _ => f64::INFINITY,
    })
}

pub(crate) fn all_finite_matrix(a: &DMatrix<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub(crate) fn all_finite_vector(a: &DVector<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Select the listed columns of `a` in order.
pub fn select_columns(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

/// Select the listed rows of `a` in order.
pub fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}
