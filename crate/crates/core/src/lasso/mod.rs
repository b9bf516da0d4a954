//! Penalized least-squares solvers.
//!
//! All objectives use the `(1/(2n)) ||y - Z theta||^2` loss so that tuning
//! parameters live on the `sqrt(log n / n)` scale. Columns flagged as
//! unpenalized are fitted exactly; penalized columns receive an L1 penalty
//! and, optionally, a group L2 penalty.

mod cv;
pub(crate) mod engine;

pub use cv::{cv_select_lambda, lambda_path, CvResult};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Projector};
use engine::{GramSystem, PenaltySpec};

/// `sign(z) * max(|z| - gamma, 0)`.
#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// `c * sqrt((log n + log q) / n)`.
pub fn benchmark_lambda(n: f64, q: usize, c: f64) -> f64 {
    c * ((n.ln() + (q.max(1) as f64).ln()) / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Convergence threshold on the largest coefficient change in a sweep.
    pub tolerance: f64,
    /// Solve on columns scaled to `||z||^2 / n = 1` and map coefficients back.
    pub standardize: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iterations: 10_000, tolerance: 1e-8, standardize: true }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// A penalized least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedProblem {
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    /// `true` for columns carrying the L1 (and group) penalty.
    pub penalty_mask: Vec<bool>,
    /// Disjoint groups of penalized columns.
    pub groups: Option<Vec<Vec<usize>>>,
    pub lambda_l1: f64,
    pub lambda_group: f64,
}

impl PenalizedProblem {
    pub fn new(design: DMatrix<f64>, response: DVector<f64>, penalty_mask: Vec<bool>) -> Result<Self> {
        let problem =
            Self { design, response, penalty_mask, groups: None, lambda_l1: 0.0, lambda_group: 0.0 };
        problem.validate()?;
        Ok(problem)
    }

    /// Every column penalized.
    pub fn all_penalized(design: DMatrix<f64>, response: DVector<f64>) -> Result<Self> {
        let p = design.ncols();
        Self::new(design, response, vec![true; p])
    }

    pub fn with_lambda(mut self, lambda_l1: f64) -> Self {
        self.lambda_l1 = lambda_l1;
        self
    }

    pub fn with_groups(mut self, groups: Vec<Vec<usize>>, lambda_group: f64) -> Self {
        self.groups = Some(groups);
        self.lambda_group = lambda_group;
        self
    }

    pub fn n_obs(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_coef(&self) -> usize {
        self.design.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = self.design.shape();
        if self.response.len() != n {
            return Err(Error::Dimension(format!("design has {n} rows but response has {}", self.response.len())));
        }
        if self.penalty_mask.len() != p {
            return Err(Error::Dimension(format!(
                "penalty mask has {} entries for {p} columns",
                self.penalty_mask.len()
            )));
        }
        if !(self.lambda_l1 >= 0.0) || !(self.lambda_group >= 0.0) {
            return Err(Error::InvalidArgument("penalty levels must be nonnegative".into()));
        }
        if !self.lambda_l1.is_finite() || !self.lambda_group.is_finite() {
            return Err(Error::NonFinite("penalty level"));
        }
        if !linalg::all_finite_matrix(&self.design) {
            return Err(Error::NonFinite("design"));
        }
        if !linalg::all_finite_vector(&self.response) {
            return Err(Error::NonFinite("response"));
        }
        if let Some(groups) = &self.groups {
            let mut seen = vec![false; p];
            for g in groups {
                for &j in g {
                    if j >= p {
                        return Err(Error::Dimension(format!("group index {j} out of range for {p} columns")));
                    }
                    if !self.penalty_mask[j] {
                        return Err(Error::InvalidArgument(format!("unpenalized column {j} placed in a group")));
                    }
                    if seen[j] {
                        return Err(Error::InvalidArgument(format!("column {j} belongs to more than one group")));
                    }
                    seen[j] = true;
                }
            }
        }
        Ok(())
    }

    fn empty_groups() -> &'static [Vec<usize>] {
        &[]
    }

    pub(crate) fn penalty_spec(&self) -> PenaltySpec<'_> {
        PenaltySpec {
            mask: &self.penalty_mask,
            groups: self.groups.as_deref().unwrap_or(Self::empty_groups()),
            lambda_l1: self.lambda_l1,
            lambda_group: self.lambda_group,
        }
    }

    /// The problem on columns scaled to `||z_j||^2 / n = 1`, with the scales.
    ///
    /// If `theta` solves the scaled problem then `theta ./ scales` is the
    /// coefficient vector on the original columns.
    pub fn standardized(&self) -> (PenalizedProblem, DVector<f64>) {
        let n = self.n_obs().max(1) as f64;
        let scales = DVector::from_fn(self.n_coef(), |j, _| {
            let s = (self.design.column(j).norm_squared() / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        });
        let mut design = self.design.clone();
        for (j, mut col) in design.column_iter_mut().enumerate() {
            col /= scales[j];
        }
        (PenalizedProblem { design, ..self.clone() }, scales)
    }

    /// Penalized objective `(1/(2n))||y - Z theta||^2 + penalty(theta)`.
    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        let n = self.n_obs().max(1) as f64;
        let r = &self.response - &self.design * theta;
        0.5 * r.norm_squared() / n + self.penalty_spec().value(theta)
    }
}

/// Output of a penalized fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub coefficients: DVector<f64>,
    pub iterations: usize,
    /// Optimality certificate of the problem actually solved (the
    /// standardized one when standardization is on).
    pub kkt_residual: f64,
}

/// Largest violation of the subgradient optimality conditions at `theta`.
pub fn kkt_residual(problem: &PenalizedProblem, theta: &DVector<f64>) -> Result<f64> {
    if theta.len() != problem.n_coef() {
        return Err(Error::Dimension(format!("theta has {} entries for {} columns", theta.len(), problem.n_coef())));
    }
    if problem.response.len() != problem.n_obs() {
        return Err(Error::Dimension("response length differs from design rows".into()));
    }
    let n = problem.n_obs().max(1) as f64;
    let r = &problem.design * theta - &problem.response;
    let grad = problem.design.tr_mul(&r) / n;
    Ok(engine::kkt_from_gradient(&grad, theta, &problem.penalty_spec()))
}

/// Smallest L1 level at which every penalized coefficient is zero, after the
/// response has been projected off the unpenalized columns.
pub fn lambda_max(problem: &PenalizedProblem) -> f64 {
    let n = problem.n_obs().max(1) as f64;
    let free: Vec<usize> = (0..problem.n_coef()).filter(|&j| !problem.penalty_mask[j]).collect();
    let resid = if free.is_empty() {
        problem.response.clone()
    } else {
        Projector::new(&linalg::select_columns(&problem.design, &free)).apply(&problem.response)
    };
    (0..problem.n_coef())
        .filter(|&j| problem.penalty_mask[j])
        .map(|j| (problem.design.column(j).dot(&resid) / n).abs())
        .fold(0.0, f64::max)
}

/// Fit on a prepared Gram system, handling standardization and warm starts.
pub(crate) fn fit_system(
    sys: &GramSystem,
    pen: PenaltySpec<'_>,
    warm: Option<&DVector<f64>>,
    config: &SolverConfig,
) -> Result<Solution> {
    config.validate()?;
    if config.standardize {
        let scales = sys.scales();
        let scaled = sys.rescaled(&scales);
        let warm_scaled = warm.map(|w| w.component_mul(&scales));
        let out = engine::solve(&scaled, pen, warm_scaled.as_ref(), config, None)?;
        Ok(Solution { coefficients: out.theta.component_div(&scales), iterations: out.iterations, kkt_residual: out.kkt })
    } else {
        let out = engine::solve(sys, pen, warm, config, None)?;
        Ok(Solution { coefficients: out.theta, iterations: out.iterations, kkt_residual: out.kkt })
    }
}

/// LASSO with unpenalized columns by cyclic coordinate descent.
pub fn lasso_fit(problem: &PenalizedProblem, config: &SolverConfig) -> Result<Solution> {
    lasso_fit_warm(problem, config, None)
}

/// [`lasso_fit`] started from `warm`.
pub fn lasso_fit_warm(problem: &PenalizedProblem, config: &SolverConfig, warm: Option<&DVector<f64>>) -> Result<Solution> {
    problem.validate()?;
    if problem.groups.is_some() && problem.lambda_group > 0.0 {
        return Err(Error::InvalidArgument("lasso_fit called with an active group penalty".into()));
    }
    check_warm(problem, warm)?;
    let sys = GramSystem::from_data(&problem.design, &problem.response);
    let pen = PenaltySpec { groups: &[], lambda_group: 0.0, ..problem.penalty_spec() };
    fit_system(&sys, pen, warm, config)
}

/// Sparse group LASSO by block coordinate descent with group-zero screening.
pub fn sparse_group_lasso_fit(problem: &PenalizedProblem, config: &SolverConfig) -> Result<Solution> {
    sparse_group_lasso_fit_warm(problem, config, None)
}

pub fn sparse_group_lasso_fit_warm(
    problem: &PenalizedProblem,
    config: &SolverConfig,
    warm: Option<&DVector<f64>>,
) -> Result<Solution> {
    problem.validate()?;
    if problem.groups.is_none() {
        return Err(Error::InvalidArgument("sparse group lasso requires groups".into()));
    }
    check_warm(problem, warm)?;
    let sys = GramSystem::from_data(&problem.design, &problem.response);
    fit_system(&sys, problem.penalty_spec(), warm, config)
}

fn check_warm(problem: &PenalizedProblem, warm: Option<&DVector<f64>>) -> Result<()> {
    if let Some(w) = warm {
        if w.len() != problem.n_coef() {
            return Err(Error::Dimension("warm start length differs from column count".into()));
        }
        if !linalg::all_finite_vector(w) {
            return Err(Error::NonFinite("warm start"));
        }
    }
    Ok(())
}

/// Objective value after every sweep of an unstandardized solve.
#[cfg(test)]
pub(crate) fn objective_trace(problem: &PenalizedProblem, config: &SolverConfig) -> Result<Vec<f64>> {
    let sys = GramSystem::from_data(&problem.design, &problem.response);
    let mut trace = Vec::new();
    engine::solve(&sys, problem.penalty_spec(), None, config, Some(&mut trace))?;
    Ok(trace)
}
