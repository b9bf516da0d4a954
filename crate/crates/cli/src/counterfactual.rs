//! Predicted outcomes of the other nodes when a set of nodes is forced to 1.
//!
//! With `A` the fitted spillover matrix, leader outcomes are fixed at one and
//! the remaining rows of the structural system are solved:
//! `D_F = (I_FF - A_FF)^-1 (A_FL 1 + X_F b + e_F)`.

use nalgebra::{DMatrix, DVector};
use netlasso::estimator::FitResult;
use netlasso::network::MultiNetwork;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// How the structural errors of the non-leaders enter the prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsilonPolicy {
    Zero,
    /// Average over `draws` bootstrap draws from centered `residuals`.
    Resample { residuals: DVector<f64>, seed: u64, draws: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub leaders: Vec<usize>,
    pub followers: Vec<usize>,
    /// Raw predictions for `followers`, averaged over draws.
    pub predicted: Vec<f64>,
    pub mean_outcome: f64,
    /// Mean of the predictions clipped to `[0, 1]`, averaged over draws.
    pub participation_rate: f64,
}

/// `Σ_j M^j∘η^j`, plus `γ M` when the fit carries a homogeneous effect.
pub fn spillover_matrix(fit: &FitResult, networks: &MultiNetwork) -> Result<DMatrix<f64>> {
    let n = networks.n();
    if fit.n() != n || fit.n_networks != networks.q() {
        return Err(CliError::Data(format!(
            "fit covers {} nodes and {} network(s), data has {n} and {}",
            fit.n(),
            fit.n_networks,
            networks.q()
        )));
    }
    let mut a = DMatrix::zeros(n, n);
    for (j, m) in networks.networks().iter().enumerate() {
        a += m.col_scale(&fit.eta_network(j))?;
    }
    if let Some(g) = fit.gamma_hat {
        a += networks.networks()[0].matrix() * g;
    }
    Ok(a)
}

/// `D - A D - X b` under the fitted coefficients.
pub fn structural_residuals(d: &DVector<f64>, x: &DMatrix<f64>, networks: &MultiNetwork, fit: &FitResult) -> Result<DVector<f64>> {
    let a = spillover_matrix(fit, networks)?;
    if x.nrows() != d.len() || x.ncols() != fit.beta_hat.len() {
        return Err(CliError::Data("covariates do not match the fit".into()));
    }
    Ok(d - &a * d - x * &fit.beta_hat)
}

pub fn counterfactual_participation(
    fit: &FitResult,
    networks: &MultiNetwork,
    x: &DMatrix<f64>,
    leaders: &[usize],
    policy: &EpsilonPolicy,
) -> Result<Counterfactual> {
    let n = networks.n();
    let a = spillover_matrix(fit, networks)?;
    if x.nrows() != n || x.ncols() != fit.beta_hat.len() {
        return Err(CliError::Data(format!("covariates are {}x{}, fit expects {n}x{}", x.nrows(), x.ncols(), fit.beta_hat.len())));
    }
    let mut is_leader = vec![false; n];
    for &l in leaders {
        if l >= n {
            return Err(CliError::Data(format!("leader index {l} out of range (n = {n})")));
        }
        if std::mem::replace(&mut is_leader[l], true) {
            return Err(CliError::Data(format!("leader index {l} listed twice")));
        }
    }
    let followers: Vec<usize> = (0..n).filter(|&i| !is_leader[i]).collect();
    let nf = followers.len();
    let xb = x * &fit.beta_hat;

    let system = DMatrix::from_fn(nf, nf, |r, c| if r == c { 1.0 } else { 0.0 } - a[(followers[r], followers[c])]);
    let base = DVector::from_fn(nf, |r, _| {
        let i = followers[r];
        xb[i] + leaders.iter().map(|&l| a[(i, l)]).sum::<f64>()
    });
    let lu = system.lu();
    let solve = |rhs: &DVector<f64>| -> Result<DVector<f64>> {
        let sol = lu.solve(rhs).ok_or_else(|| CliError::Data("restricted system I - A_FF is singular".into()))?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Data("restricted system I - A_FF is singular".into()));
        }
        Ok(sol)
    };
    let rate = |v: &DVector<f64>| if nf == 0 { f64::NAN } else { v.iter().map(|x| x.clamp(0.0, 1.0)).sum::<f64>() / nf as f64 };

    let (predicted, participation_rate) = match policy {
        EpsilonPolicy::Zero => {
            let sol = solve(&base)?;
            let r = rate(&sol);
            (sol, r)
        }
        EpsilonPolicy::Resample { residuals, seed, draws } => {
            if *draws == 0 {
                return Err(CliError::Usage("resampling needs at least one draw".into()));
            }
            if residuals.is_empty() {
                return Err(CliError::Data("no residuals to resample".into()));
            }
            let centered = residuals.add_scalar(-residuals.mean());
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut sum = DVector::zeros(nf);
            let mut rate_sum = 0.0;
            for _ in 0..*draws {
                let eps = DVector::from_fn(nf, |_, _| centered[rng.gen_range(0..centered.len())]);
                let sol = solve(&(&base + eps))?;
                rate_sum += rate(&sol);
                sum += sol;
            }
            (sum / *draws as f64, rate_sum / *draws as f64)
        }
    };
    let mean_outcome = if nf == 0 { f64::NAN } else { predicted.mean() };
    Ok(Counterfactual {
        leaders: leaders.to_vec(),
        followers,
        predicted: predicted.iter().copied().collect(),
        mean_outcome,
        participation_rate,
    })
}
