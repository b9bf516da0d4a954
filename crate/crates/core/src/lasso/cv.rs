use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::GramSystem;
use super::{fit_system, lambda_max, PenalizedProblem, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda: f64,
    pub index: usize,
    /// Mean held-out squared error per path entry, in the caller's order.
    pub mean_errors: Vec<f64>,
    /// Standard error of the fold errors per path entry.
    pub se_errors: Vec<f64>,
    /// Largest lambda whose mean error is within one standard error of the minimum.
    pub lambda_1se: f64,
    pub index_1se: usize,
}

/// Log-spaced decreasing path from the (standardized, if requested) lambda_max
/// down to `min_ratio * lambda_max`.
pub fn lambda_path(problem: &PenalizedProblem, standardize: bool, len: usize, min_ratio: f64) -> Vec<f64> {
    let top = if standardize { lambda_max(&problem.standardized().0) } else { lambda_max(problem) };
    if len <= 1 || top <= 0.0 {
        return vec![top.max(f64::MIN_POSITIVE)];
    }
    let ratio = min_ratio.clamp(1e-12, 1.0);
    (0..len)
        .map(|i| top * ratio.powf(i as f64 / (len - 1) as f64))
        .collect()
}

/// K-fold cross-validation over a lambda path.
///
/// Fold membership is a seeded shuffle of the rows. For grouped problems the
/// group level follows the path at the ratio `lambda_group / lambda_l1` of
/// `problem` (1 when `lambda_l1` is zero). Ties go to the smallest lambda.
pub fn cv_select_lambda(
    problem: &PenalizedProblem,
    folds: usize,
    path: &[f64],
    seed: u64,
    config: &SolverConfig,
) -> Result<CvResult> {
    problem.validate()?;
    let n = problem.n_obs();
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!("folds must lie in [2, {n}], got {folds}")));
    }
    if path.is_empty() {
        return Err(Error::InvalidArgument("empty lambda path".into()));
    }
    if path.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("lambda path"));
    }
    if path.iter().any(|&l| l < 0.0) {
        return Err(Error::InvalidArgument("negative lambda on path".into()));
    }
    if path.len() == 1 {
        return Ok(CvResult { lambda: path[0], index: 0, mean_errors: vec![f64::NAN], se_errors: vec![f64::NAN], lambda_1se: path[0], index_1se: 0 });
    }
    let group_ratio = match (&problem.groups, problem.lambda_l1 > 0.0) {
        (Some(_), true) => problem.lambda_group / problem.lambda_l1,
        (Some(_), false) => 1.0,
        (None, _) => 0.0,
    };

    let mut order: Vec<usize> = (0..path.len()).collect();
    order.sort_by(|&a, &b| path[b].partial_cmp(&path[a]).unwrap());

    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in rows.iter().enumerate() {
        fold_of[i] = pos % folds;
    }

    let z = &problem.design;
    let y = &problem.response;
    let ztz = z.tr_mul(z);
    let zty = z.tr_mul(y);
    let yty = y.dot(y);
    let groups = problem.groups.clone().unwrap_or_default();

    let mut per_fold = vec![vec![0.0; path.len()]; folds];
    for f in 0..folds {
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let n_train = (n - test.len()) as f64;
        let zt = linalg::select_rows(z, &test);
        let yt = DVector::from_iterator(test.len(), test.iter().map(|&i| y[i]));
        let sys = GramSystem {
            gram: (&ztz - zt.tr_mul(&zt)) / n_train,
            corr: (&zty - zt.tr_mul(&yt)) / n_train,
            yy: (yty - yt.dot(&yt)) / n_train,
        };
        let mut warm: Option<DVector<f64>> = None;
        for &k in &order {
            let lam = path[k];
            let pen = super::engine::PenaltySpec {
                mask: &problem.penalty_mask,
                groups: &groups,
                lambda_l1: lam,
                lambda_group: group_ratio * lam,
            };
            let sol = fit_system(&sys, pen, warm.as_ref(), config)?;
            per_fold[f][k] = heldout_mse(&zt, &yt, &sol.coefficients);
            warm = Some(sol.coefficients);
        }
    }
    let kf = folds as f64;
    let errors: Vec<f64> = (0..path.len()).map(|k| per_fold.iter().map(|e| e[k]).sum::<f64>() / kf).collect();
    let se_errors: Vec<f64> = (0..path.len())
        .map(|k| {
            let var = per_fold.iter().map(|e| (e[k] - errors[k]).powi(2)).sum::<f64>() / (kf - 1.0);
            (var / kf).sqrt()
        })
        .collect();
    let mut best = order[0];
    for &k in &order {
        // `order` is decreasing in lambda, so `<=` keeps the smallest among ties.
        if errors[k] <= errors[best] {
            best = k;
        }
    }
    let bound = errors[best] + se_errors[best];
    let index_1se = order.iter().copied().find(|&k| errors[k] <= bound).unwrap_or(best);
    Ok(CvResult { lambda: path[best], index: best, lambda_1se: path[index_1se], index_1se, mean_errors: errors, se_errors })
}

fn heldout_mse(z: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    (y - z * theta).norm_squared() / y.len() as f64
}
