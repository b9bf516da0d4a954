//! Instrument construction and the two-stage LASSO estimators.
//!
//! Each stage partials the unpenalized covariates out of the response and the
//! penalized block, runs the penalized fit on the projected data and then
//! recovers the covariate coefficients by least squares. This is the same
//! estimator as the joint problem with `X` unpenalized; it also fixes the
//! standardization scales to the projected column norms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{
    benchmark_lambda, cv_select_lambda, lambda_path, lasso_fit, sparse_group_lasso_fit, PenalizedProblem,
    SolverConfig,
};
use crate::linalg::{self, Projector, RANK_RTOL};
use crate::network::{col_scale, AdjacencyMatrix, MultiNetwork};

/// How the penalty level of one stage is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StageTuning {
    /// `c * sqrt((log n + log q) / n)`.
    Benchmark { c: f64 },
    Fixed { lambda: f64 },
    CrossValidation {
        folds: usize,
        path_len: usize,
        min_ratio: f64,
        /// Take the largest lambda within one standard error of the best.
        #[serde(default)]
        one_se: bool,
    },
}

impl StageTuning {
    pub fn cv_default() -> Self {
        Self::CrossValidation { folds: 10, path_len: 25, min_ratio: 0.01, one_se: false }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Benchmark { c } if !(c > 0.0) || !c.is_finite() => {
                Err(Error::InvalidArgument(format!("benchmark constant must be positive, got {c}")))
            }
            Self::Fixed { lambda } if !(lambda >= 0.0) || !lambda.is_finite() => {
                Err(Error::InvalidArgument(format!("fixed lambda must be nonnegative, got {lambda}")))
            }
            Self::CrossValidation { folds, path_len, min_ratio, .. } => {
                if folds < 2 || path_len == 0 || !(min_ratio > 0.0 && min_ratio <= 1.0) {
                    Err(Error::InvalidArgument("cross-validation needs folds >= 2, a nonempty path and min_ratio in (0, 1]".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningPolicy {
    pub first_stage: StageTuning,
    pub second_stage: StageTuning,
    /// Group penalty as a multiple of the L1 level (multiple networks only).
    pub group_ratio: f64,
    /// Apply the L1 penalty to the homogeneous clique coefficient.
    pub penalize_gamma: bool,
    /// Seed for cross-validation fold assignment.
    pub cv_seed: u64,
    pub solver: SolverConfig,
}

impl Default for TuningPolicy {
    fn default() -> Self {
        Self {
            first_stage: StageTuning::Benchmark { c: 2.0 },
            second_stage: StageTuning::cv_default(),
            group_ratio: 1.0,
            penalize_gamma: true,
            cv_seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

impl TuningPolicy {
    /// Benchmark rule with constant `c` in both stages.
    pub fn benchmark(c: f64) -> Self {
        Self { first_stage: StageTuning::Benchmark { c }, second_stage: StageTuning::Benchmark { c }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.first_stage.validate()?;
        self.second_stage.validate()?;
        self.solver.validate()?;
        if !(self.group_ratio >= 0.0) || !self.group_ratio.is_finite() {
            return Err(Error::InvalidArgument("group_ratio must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Lambdas {
    pub first_stage: f64,
    pub second_stage: f64,
    pub first_stage_group: Option<f64>,
    pub second_stage_group: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub first_kkt: f64,
    pub first_iterations: usize,
    pub second_kkt: f64,
    pub second_iterations: usize,
    /// Mean held-out error along the second-stage path when cross-validated.
    pub cv_errors: Option<Vec<f64>>,
    /// Nodes with no incoming links, excluded from the candidate set.
    pub dropped_isolated: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta_hat: DVector<f64>,
    /// Node effects, network by network (`n * q` entries).
    pub eta_hat: DVector<f64>,
    pub gamma_hat: Option<f64>,
    /// `{i : eta_hat[i] != 0}` over the stacked vector.
    pub selected_set: Vec<usize>,
    pub d_hat: DVector<f64>,
    pub lambdas: Lambdas,
    pub diagnostics: StageDiagnostics,
    pub n_networks: usize,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.d_hat.len()
    }

    /// Effects of network `j`.
    pub fn eta_network(&self, j: usize) -> DVector<f64> {
        let n = self.n();
        self.eta_hat.rows(j * n, n).into_owned()
    }

    /// Selected nodes of each network.
    pub fn selected_per_network(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut out = vec![Vec::new(); self.n_networks];
        for &i in &self.selected_set {
            out[i / n].push(i % n);
        }
        out
    }
}

/// `[M∘X_1 | ... | M∘X_k]`, `n x (n k)`.
pub fn build_instruments(m: &AdjacencyMatrix, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.n();
    if x.nrows() != n {
        return Err(Error::Dimension(format!("covariates have {} rows for {n} nodes", x.nrows())));
    }
    let mut out = DMatrix::zeros(n, n * x.ncols());
    for c in 0..x.ncols() {
        let block = m.col_scale(&x.column(c).into_owned())?;
        out.view_mut((0, c * n), (n, n)).copy_from(&block);
    }
    Ok(out)
}

/// First-stage output.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstStage {
    pub beta_tilde: DVector<f64>,
    /// Instrument coefficients, covariate block by covariate block (`n k` entries).
    pub eta_tilde: DVector<f64>,
    pub d_hat: DVector<f64>,
    pub lambda: f64,
    pub kkt: f64,
    pub iterations: usize,
}

/// Result of one penalized stage on partialled-out data.
struct StageFit {
    coef: DVector<f64>,
    lambda: f64,
    lambda_group: Option<f64>,
    kkt: f64,
    iterations: usize,
    cv_errors: Option<Vec<f64>>,
}

/// Penalized regression of `y` on `design` (both already projected).
fn penalized_stage(
    design: DMatrix<f64>,
    y: DVector<f64>,
    groups: Option<Vec<Vec<usize>>>,
    tuning: &StageTuning,
    policy: &TuningPolicy,
    q: usize,
) -> Result<StageFit> {
    let n = y.len();
    let p = design.ncols();
    let group_ratio = if groups.is_some() { policy.group_ratio } else { 0.0 };
    let lambda_for = |lam: f64| if groups.is_some() { Some(group_ratio * lam) } else { None };
    if p == 0 {
        let lambda = match *tuning {
            StageTuning::Benchmark { c } => benchmark_lambda(n as f64, q, c),
            StageTuning::Fixed { lambda } => lambda,
            StageTuning::CrossValidation { .. } => 0.0,
        };
        return Ok(StageFit { coef: DVector::zeros(0), lambda, lambda_group: lambda_for(lambda), kkt: 0.0, iterations: 0, cv_errors: None });
    }
    let mut problem = PenalizedProblem::all_penalized(design, y)?;
    if let Some(g) = groups.clone() {
        problem = problem.with_groups(g, group_ratio);
    }
    let (lambda, cv_errors) = match *tuning {
        StageTuning::Benchmark { c } => (benchmark_lambda(n as f64, q, c), None),
        StageTuning::Fixed { lambda } => (lambda, None),
        StageTuning::CrossValidation { folds, path_len, min_ratio, one_se } => {
            let scaled = problem.clone().with_lambda(1.0);
            let path = lambda_path(&scaled, policy.solver.standardize, path_len, min_ratio);
            let cv = cv_select_lambda(&scaled, folds.min(n), &path, policy.cv_seed, &policy.solver)?;
            (if one_se { cv.lambda_1se } else { cv.lambda }, Some(cv.mean_errors))
        }
    };
    let lambda_group = lambda_for(lambda);
    problem.lambda_l1 = lambda;
    let sol = match lambda_group {
        Some(lg) => {
            problem.lambda_group = lg;
            sparse_group_lasso_fit(&problem, &policy.solver)?
        }
        None => lasso_fit(&problem, &policy.solver)?,
    };
    Ok(StageFit { coef: sol.coefficients, lambda, lambda_group, kkt: sol.kkt_residual, iterations: sol.iterations, cv_errors })
}

fn check_inputs(d: &DVector<f64>, x: &DMatrix<f64>, n: usize) -> Result<()> {
    if d.len() != n || x.nrows() != n {
        return Err(Error::Dimension(format!("outcome has {} entries and covariates {} rows for {n} nodes", d.len(), x.nrows())));
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("at least one covariate column is required".into()));
    }
    if !linalg::all_finite_vector(d) {
        return Err(Error::NonFinite("outcome"));
    }
    if !linalg::all_finite_matrix(x) {
        return Err(Error::NonFinite("covariates"));
    }
    let rank = linalg::numerical_rank(x, RANK_RTOL);
    if rank < x.ncols() {
        return Err(Error::RankDeficientCovariates { rank, cols: x.ncols() });
    }
    Ok(())
}

/// Nodes with at least one incoming link (nonzero column) in any network.
pub(crate) fn candidate_nodes(networks: &[AdjacencyMatrix]) -> Vec<usize> {
    let n = networks[0].n();
    (0..n).filter(|&j| networks.iter().any(|m| m.degree(j) > 0)).collect()
}

fn isolated_nodes(networks: &[AdjacencyMatrix]) -> Vec<usize> {
    let keep = candidate_nodes(networks);
    let n = networks[0].n();
    (0..n).filter(|j| keep.binary_search(j).is_err()).collect()
}

/// Candidate columns of `M∘v` (nodes with incoming links).
fn scaled_columns(m: &AdjacencyMatrix, v: &DVector<f64>, nodes: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.n(), nodes.len());
    for (a, &j) in nodes.iter().enumerate() {
        out.set_column(a, &(m.matrix().column(j) * v[j]));
    }
    out
}

fn hstack(blocks: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (n, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    out
}

/// Least-squares covariate coefficients for `y - Z theta`.
fn covariate_coefficients(proj: &Projector, y: &DVector<f64>, z: &DMatrix<f64>, theta: &DVector<f64>) -> DVector<f64> {
    if z.ncols() == 0 {
        proj.coefficients(y)
    } else {
        proj.coefficients(&(y - z * theta))
    }
}

/// First stage: LASSO of `D` on `[X | M∘X]`, `X` unpenalized, at `lambda1`.
pub fn first_stage(
    d: &DVector<f64>,
    x: &DMatrix<f64>,
    m: &AdjacencyMatrix,
    lambda1: f64,
    config: &SolverConfig,
) -> Result<FirstStage> {
    let policy = TuningPolicy { solver: *config, ..TuningPolicy::default() };
    first_stage_with(d, x, std::slice::from_ref(m), &StageTuning::Fixed { lambda: lambda1 }, &policy)
}

fn first_stage_with(
    d: &DVector<f64>,
    x: &DMatrix<f64>,
    networks: &[AdjacencyMatrix],
    tuning: &StageTuning,
    policy: &TuningPolicy,
) -> Result<FirstStage> {
    let n = networks[0].n();
    check_inputs(d, x, n)?;
    tuning.validate()?;
    policy.solver.validate()?;
    let nodes = candidate_nodes(networks);
    let proj = Projector::new(x);
    let mut blocks = Vec::new();
    let mut groups = Vec::new();
    let mut at = 0;
    for m in networks {
        let mut g = Vec::new();
        for c in 0..x.ncols() {
            blocks.push(scaled_columns(m, &x.column(c).into_owned(), &nodes));
            g.extend(at..at + nodes.len());
            at += nodes.len();
        }
        groups.push(g);
    }
    let z = hstack(&blocks, n);
    let q = networks.len();
    let grouped = if q > 1 { Some(groups) } else { None };
    let fit = penalized_stage(proj.apply_matrix(&z), proj.apply(d), grouped, tuning, policy, q)?;
    let beta_tilde = covariate_coefficients(&proj, d, &z, &fit.coef);
    let d_hat = x * &beta_tilde + &z * &fit.coef;
    let eta_tilde = scatter(&fit.coef, &nodes, n, q * x.ncols());
    Ok(FirstStage { beta_tilde, eta_tilde, d_hat, lambda: fit.lambda, kkt: fit.kkt, iterations: fit.iterations })
}

/// Spread block-wise candidate coefficients back to `blocks * n` entries.
fn scatter(coef: &DVector<f64>, nodes: &[usize], n: usize, blocks: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n * blocks);
    for b in 0..blocks {
        for (a, &j) in nodes.iter().enumerate() {
            out[b * n + j] = coef[b * nodes.len() + a];
        }
    }
    out
}

fn support_of(v: &DVector<f64>) -> Vec<usize> {
    v.iter().enumerate().filter(|(_, &e)| e != 0.0).map(|(i, _)| i).collect()
}

/// Second stage: LASSO of `D` on `[X | M∘D̂]`, `X` unpenalized, at `lambda`.
pub fn second_stage(
    d: &DVector<f64>,
    x: &DMatrix<f64>,
    m: &AdjacencyMatrix,
    d_hat: &DVector<f64>,
    lambda: f64,
    config: &SolverConfig,
) -> Result<FitResult> {
    let policy = TuningPolicy { solver: *config, ..TuningPolicy::default() };
    second_stage_with(d, x, std::slice::from_ref(m), d_hat, &StageTuning::Fixed { lambda }, &policy)
}

fn second_stage_with(
    d: &DVector<f64>,
    x: &DMatrix<f64>,
    networks: &[AdjacencyMatrix],
    d_hat: &DVector<f64>,
    tuning: &StageTuning,
    policy: &TuningPolicy,
) -> Result<FitResult> {
    let n = networks[0].n();
    check_inputs(d, x, n)?;
    if d_hat.len() != n {
        return Err(Error::Dimension("first-stage fit has the wrong length".into()));
    }
    tuning.validate()?;
    policy.solver.validate()?;
    let nodes = candidate_nodes(networks);
    let q = networks.len();
    let proj = Projector::new(x);
    let blocks: Vec<DMatrix<f64>> = networks.iter().map(|m| scaled_columns(m, d_hat, &nodes)).collect();
    let z = hstack(&blocks, n);
    let grouped = if q > 1 {
        Some((0..q).map(|j| (j * nodes.len()..(j + 1) * nodes.len()).collect()).collect())
    } else {
        None
    };
    let fit = penalized_stage(proj.apply_matrix(&z), proj.apply(d), grouped, tuning, policy, q)?;
    let beta_hat = covariate_coefficients(&proj, d, &z, &fit.coef);
    let eta_hat = scatter(&fit.coef, &nodes, n, q);
    Ok(FitResult {
        beta_hat,
        selected_set: support_of(&eta_hat),
        eta_hat,
        gamma_hat: None,
        d_hat: d_hat.clone(),
        lambdas: Lambdas { first_stage: f64::NAN, second_stage: fit.lambda, first_stage_group: None, second_stage_group: fit.lambda_group },
        diagnostics: StageDiagnostics {
            second_kkt: fit.kkt,
            second_iterations: fit.iterations,
            cv_errors: fit.cv_errors,
            dropped_isolated: isolated_nodes(networks),
            ..StageDiagnostics::default()
        },
        n_networks: q,
    })
}

/// Two-stage LASSO for the single-network model.
pub fn fit_2slss(d: &DVector<f64>, x: &DMatrix<f64>, m: &AdjacencyMatrix, tuning: &TuningPolicy) -> Result<FitResult> {
    fit_networks(d, x, std::slice::from_ref(m), tuning)
}

/// Two-stage sparse group LASSO with one group per network.
pub fn fit_2slss_multinet(d: &DVector<f64>, x: &DMatrix<f64>, multi: &MultiNetwork, tuning: &TuningPolicy) -> Result<FitResult> {
    fit_networks(d, x, multi.networks(), tuning)
}

fn fit_networks(d: &DVector<f64>, x: &DMatrix<f64>, networks: &[AdjacencyMatrix], tuning: &TuningPolicy) -> Result<FitResult> {
    tuning.validate()?;
    let first = first_stage_with(d, x, networks, &tuning.first_stage, tuning)?;
    let mut fit = second_stage_with(d, x, networks, &first.d_hat, &tuning.second_stage, tuning)?;
    fit.lambdas.first_stage = first.lambda;
    if networks.len() > 1 {
        fit.lambdas.first_stage_group = Some(tuning.group_ratio * first.lambda);
    }
    fit.diagnostics.first_kkt = first.kkt;
    fit.diagnostics.first_iterations = first.iterations;
    Ok(fit)
}

/// Two-stage LASSO for the model with an additional homogeneous effect `γ M D`.
///
/// Stage one regresses `D` on `[X | M^i X, i = 1..k | M^i (M∘X), i = 0..k]`;
/// stage two on `[X | M D̂ | M∘D̂]` and `gamma_hat` is the coefficient on `M D̂`.
pub fn fit_2slss_cliques(
    d: &DVector<f64>,
    x: &DMatrix<f64>,
    m: &AdjacencyMatrix,
    k_powers: usize,
    tuning: &TuningPolicy,
) -> Result<FitResult> {
    tuning.validate()?;
    if k_powers == 0 {
        return Err(Error::InvalidArgument("k_powers must be at least 1".into()));
    }
    let n = m.n();
    check_inputs(d, x, n)?;
    let nodes = candidate_nodes(std::slice::from_ref(m));
    let proj = Projector::new(x);
    let mut warnings = Vec::new();

    // stage one
    let mut power_x = Vec::with_capacity(k_powers);
    let mut cur = x.clone();
    for _ in 0..k_powers {
        cur = m.matrix() * cur;
        power_x.push(cur.clone());
    }
    let powers = hstack(&power_x, n);
    if linalg::numerical_rank(&hstack(&[x.clone(), powers.clone()], n), RANK_RTOL) < x.ncols() * (k_powers + 1) {
        warnings.push(format!("network powers of X up to {k_powers} are collinear"));
    }
    let mut blocks = vec![powers];
    for c in 0..x.ncols() {
        let mut block = scaled_columns(m, &x.column(c).into_owned(), &nodes);
        blocks.push(block.clone());
        for _ in 0..k_powers {
            block = m.matrix() * block;
            blocks.push(block.clone());
        }
    }
    let z1 = hstack(&blocks, n);
    let first = penalized_stage(proj.apply_matrix(&z1), proj.apply(d), None, &tuning.first_stage, tuning, 1)?;
    let beta_tilde = covariate_coefficients(&proj, d, &z1, &first.coef);
    let d_hat = x * &beta_tilde + &z1 * &first.coef;

    // stage two
    let md = m.matrix() * &d_hat;
    let zeta = scaled_columns(m, &d_hat, &nodes);
    let z2 = hstack(&[DMatrix::from_column_slice(n, 1, md.as_slice()), zeta], n);
    let second = if tuning.penalize_gamma {
        penalized_stage(proj.apply_matrix(&z2), proj.apply(d), None, &tuning.second_stage, tuning, 1)?
    } else {
        // Partial M D̂ out together with X.
        let free = hstack(&[x.clone(), DMatrix::from_column_slice(n, 1, md.as_slice())], n);
        let proj_free = Projector::new(&free);
        let zp = proj_free.apply_matrix(&z2.columns(1, nodes.len()).into_owned());
        let inner = penalized_stage(zp, proj_free.apply(d), None, &tuning.second_stage, tuning, 1)?;
        let rest = d - z2.columns(1, nodes.len()) * &inner.coef;
        let g = proj_free.coefficients(&rest)[x.ncols()];
        let mut coef = DVector::zeros(nodes.len() + 1);
        coef[0] = g;
        coef.rows_mut(1, nodes.len()).copy_from(&inner.coef);
        StageFit { coef, ..inner }
    };
    let beta_hat = covariate_coefficients(&proj, d, &z2, &second.coef);
    let eta_hat = scatter(&second.coef.rows(1, nodes.len()).into_owned(), &nodes, n, 1);
    Ok(FitResult {
        beta_hat,
        selected_set: support_of(&eta_hat),
        eta_hat,
        gamma_hat: Some(second.coef[0]),
        d_hat,
        lambdas: Lambdas { first_stage: first.lambda, second_stage: second.lambda, first_stage_group: None, second_stage_group: None },
        diagnostics: StageDiagnostics {
            first_kkt: first.kkt,
            first_iterations: first.iterations,
            second_kkt: second.kkt,
            second_iterations: second.iterations,
            cv_errors: second.cv_errors,
            dropped_isolated: isolated_nodes(std::slice::from_ref(m)),
            warnings,
        },
        n_networks: 1,
    })
}

/// Known-support two-stage least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFit {
    pub beta: DVector<f64>,
    /// Effects of the nodes in `support`, in the given order.
    pub eta_s: DVector<f64>,
}

/// 2SLS with instruments `[X, (M∘X)_S]` for regressors `[X, (M∘D)_S]`.
pub fn oracle_2sls(d: &DVector<f64>, x: &DMatrix<f64>, m: &AdjacencyMatrix, support: &[usize]) -> Result<OracleFit> {
    let n = m.n();
    check_inputs(d, x, n)?;
    let k = x.ncols();
    if support.is_empty() {
        let beta = Projector::new(x).coefficients(d);
        return Ok(OracleFit { beta, eta_s: DVector::zeros(0) });
    }
    let check = crate::network::check_instrument_rank(m, x, support)?;
    if !check.full_rank {
        return Err(Error::InstrumentRank { smallest: check.smallest_singular_value });
    }
    let mut inst = vec![x.clone()];
    for c in 0..k {
        inst.push(scaled_columns(m, &x.column(c).into_owned(), support));
    }
    let h = hstack(&inst, n);
    let r = hstack(&[x.clone(), scaled_columns(m, d, support)], n);
    // P_H R = R - W_H R
    let ph_r = &r - Projector::new(&h).apply_matrix(&r);
    let lhs = ph_r.tr_mul(&r);
    let rhs = ph_r.tr_mul(d);
    let theta = lhs.lu().solve(&rhs).ok_or_else(|| Error::Singular("2SLS normal equations".into()))?;
    Ok(OracleFit { beta: theta.rows(0, k).into_owned(), eta_s: theta.rows(k, support.len()).into_owned() })
}

/// `M∘v` over all nodes, for callers that want the full matrix.
pub fn endogenous_regressors(m: &AdjacencyMatrix, v: &DVector<f64>) -> Result<DMatrix<f64>> {
    col_scale(m.matrix(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{draw_design, simulate_base, simulate_cliques, simulate_multinet, StructuralParams};
    use crate::lasso::lambda_max;
    use crate::network::{chain_block, embed_leader_block, erdos_renyi};

    fn reference(n: usize, seed: u64) -> (AdjacencyMatrix, DMatrix<f64>, DVector<f64>, StructuralParams) {
        let m = embed_leader_block(&erdos_renyi(n, 0.1, seed).unwrap(), &chain_block(5)).unwrap();
        let x = draw_design(n, 1, seed ^ 0xa5a5).unwrap();
        let p = StructuralParams::new(StructuralParams::leader_effects(n, 5, 0.5), DVector::from_element(1, 3.0), 1.0);
        let d = simulate_base(&m, &p, &x, seed ^ 0x5a5a).unwrap().outcome;
        (m, x, d, p)
    }

    #[test]
    fn instruments_examples() {
        let m = AdjacencyMatrix::from_edges(4, &[(0, 1)]).unwrap();
        let x = DMatrix::from_column_slice(4, 1, &[2.0, 3.0, 5.0, 7.0]);
        let z = build_instruments(&m, &x).unwrap();
        assert_eq!(z.iter().filter(|&&v| v != 0.0).count(), 2);
        assert_eq!(z[(0, 1)], 3.0);
        assert_eq!(z[(1, 0)], 2.0);
        assert_eq!(build_instruments(&AdjacencyMatrix::empty(4), &x).unwrap(), DMatrix::zeros(4, 4));

        let g = erdos_renyi(6, 0.5, 3).unwrap();
        let x2 = draw_design(6, 2, 4).unwrap();
        let z = build_instruments(&g, &x2).unwrap();
        for c in 0..2 {
            for i in 0..6 {
                for j in 0..6 {
                    assert_eq!(z[(i, c * 6 + j)], g.matrix()[(i, j)] * x2[(j, c)]);
                }
            }
        }
    }

    #[test]
    fn first_stage_without_network_is_ols() {
        let x = draw_design(30, 2, 1).unwrap();
        let d = draw_design(30, 1, 2).unwrap().column(0).into_owned();
        let fs = first_stage(&d, &x, &AdjacencyMatrix::empty(30), 0.1, &SolverConfig::default()).unwrap();
        let ols = Projector::new(&x).coefficients(&d);
        assert!((&fs.beta_tilde - &ols).amax() < 1e-12);
        assert!((&fs.d_hat - &x * &ols).amax() < 1e-12);
    }

    #[test]
    fn first_stage_above_lambda_max_keeps_only_covariates() {
        let (m, x, d, _) = reference(60, 3);
        let fs = first_stage(&d, &x, &m, 1e6, &SolverConfig::default()).unwrap();
        assert!(fs.eta_tilde.iter().all(|&v| v == 0.0));
        assert!((&fs.beta_tilde - Projector::new(&x).coefficients(&d)).amax() < 1e-12);
    }

    #[test]
    fn second_stage_above_lambda_max_is_ols() {
        let (m, x, d, _) = reference(60, 4);
        let fs = first_stage(&d, &x, &m, 0.3, &SolverConfig::default()).unwrap();
        let proj = Projector::new(&x);
        let z = proj.apply_matrix(&m.col_scale(&fs.d_hat).unwrap());
        let lmax = lambda_max(&PenalizedProblem::all_penalized(z, proj.apply(&d)).unwrap().standardized().0);
        let fit = second_stage(&d, &x, &m, &fs.d_hat, lmax * 1.0001, &SolverConfig::default()).unwrap();
        assert!(fit.selected_set.is_empty());
        assert!((&fit.beta_hat - proj.coefficients(&d)).amax() < 1e-12);
    }

    #[test]
    fn null_model_selects_nothing() {
        let mut empty = 0;
        for seed in 0..50 {
            let m = erdos_renyi(200, 0.1, seed).unwrap();
            let x = draw_design(200, 1, seed + 1000).unwrap();
            let p = StructuralParams::new(DVector::zeros(200), DVector::from_element(1, 3.0), 1.0);
            let d = simulate_base(&m, &p, &x, seed + 2000).unwrap().outcome;
            let fit = fit_2slss(&d, &x, &m, &TuningPolicy::benchmark(2.0)).unwrap();
            empty += fit.selected_set.is_empty() as usize;
        }
        assert!(empty >= 45, "{empty}/50");
    }

    /// Without noise the reduced form is exactly sparse on the leaders.
    #[test]
    fn first_stage_recovers_support_without_noise() {
        let mut exact = 0;
        for seed in 0..20 {
            let n = 200;
            let m = embed_leader_block(&erdos_renyi(n, 0.1, seed).unwrap(), &chain_block(5)).unwrap();
            let x = draw_design(n, 1, seed ^ 0xa5a5).unwrap();
            let eta = StructuralParams::leader_effects(n, 5, 0.5);
            let system = crate::dgp::base_system(&m, &eta).unwrap();
            let d = system.lu().solve(&(&x * DVector::from_element(1, 3.0))).unwrap();
            let fs = first_stage(&d, &x, &m, 1e-4, &SolverConfig::default()).unwrap();
            let support = support_of(&fs.eta_tilde);
            assert!((0..5).all(|j| support.contains(&j)), "seed {seed}: {support:?}");
            exact += (support == vec![0, 1, 2, 3, 4]) as usize;
        }
        assert!(exact >= 18, "{exact}/20");
    }

    #[test]
    fn first_stage_screening_rate_with_noise() {
        let mut covers = 0;
        for seed in 0..50 {
            let (m, x, d, _) = reference(200, seed);
            let fs = first_stage(&d, &x, &m, benchmark_lambda(200.0, 1, 2.0), &SolverConfig::default()).unwrap();
            covers += (0..5).all(|j| fs.eta_tilde[j] != 0.0) as usize;
        }
        assert!(covers >= 25, "{covers}/50");
    }

    #[test]
    fn isolated_nodes_never_selected() {
        let (m, x, d, _) = reference(80, 5);
        let fit = fit_2slss(&d, &x, &m, &TuningPolicy::benchmark(0.2)).unwrap();
        for &j in &fit.diagnostics.dropped_isolated {
            assert_eq!(fit.eta_hat[j], 0.0);
        }
        assert!(fit.selected_set.iter().all(|j| m.degree(*j) > 0));
    }

    #[test]
    fn pipeline_is_deterministic() {
        let (m, x, d, _) = reference(80, 6);
        let a = fit_2slss(&d, &x, &m, &TuningPolicy::default()).unwrap();
        let b = fit_2slss(&d, &x, &m, &TuningPolicy::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn permutation_equivariance() {
        let (m, x, d, _) = reference(60, 7);
        let perm: Vec<usize> = (0..60).map(|i| (i * 7 + 3) % 60).collect();
        let mp = m.permuted(&perm).unwrap();
        let mut xp = x.clone();
        let mut dp = d.clone();
        for i in 0..60 {
            xp.set_row(perm[i], &x.row(i));
            dp[perm[i]] = d[i];
        }
        let tight = TuningPolicy { solver: SolverConfig { tolerance: 1e-12, ..SolverConfig::default() }, ..TuningPolicy::benchmark(1.0) };
        let a = fit_2slss(&d, &x, &m, &tight).unwrap();
        let b = fit_2slss(&dp, &xp, &mp, &tight).unwrap();
        assert!((&a.beta_hat - &b.beta_hat).amax() < 1e-8);
        for i in 0..60 {
            assert!((a.eta_hat[i] - b.eta_hat[perm[i]]).abs() < 1e-8);
        }
    }

    #[test]
    fn multinet_single_network_reduces_to_base() {
        let (m, x, d, _) = reference(80, 8);
        let policy = TuningPolicy { group_ratio: 0.0, ..TuningPolicy::benchmark(1.0) };
        let a = fit_2slss(&d, &x, &m, &policy).unwrap();
        let b = fit_2slss_multinet(&d, &x, &MultiNetwork::single(m, "m"), &policy).unwrap();
        assert!((&a.eta_hat - &b.eta_hat).amax() <= 1e-8);
        assert!((&a.beta_hat - &b.beta_hat).amax() <= 1e-8);
        assert_eq!(a.selected_set, b.selected_set);
    }

    #[test]
    fn multinet_prefers_relevant_network() {
        let (mut rel, mut irr) = (0, 0);
        for seed in 0..20 {
            let n = 150;
            let m1 = embed_leader_block(&erdos_renyi(n, 0.1, seed).unwrap(), &chain_block(5)).unwrap();
            let m2 = erdos_renyi(n, 0.1, seed + 500).unwrap();
            let multi = MultiNetwork::new(vec![m1, m2], vec!["a".into(), "b".into()]).unwrap();
            let x = draw_design(n, 1, seed + 900).unwrap();
            let p = StructuralParams::multi(
                vec![StructuralParams::leader_effects(n, 5, 0.5), DVector::zeros(n)],
                DVector::from_element(1, 3.0),
                1.0,
            );
            let d = simulate_multinet(&multi, &p, &x, seed + 1300).unwrap().outcome;
            let fit = fit_2slss_multinet(&d, &x, &multi, &TuningPolicy::benchmark(2.0)).unwrap();
            let sel = fit.selected_per_network();
            rel += !sel[0].is_empty() as usize;
            irr += !sel[1].is_empty() as usize;
        }
        assert!(rel >= irr, "relevant {rel} irrelevant {irr}");
        assert!(rel >= 15);
    }

    #[test]
    fn cliques_recover_positive_gamma() {
        let mut positive = 0;
        let mut null_zero = 0;
        for seed in 0..20 {
            let n = 150;
            let m = erdos_renyi(n, 0.05, seed).unwrap();
            let x = draw_design(n, 1, seed + 40).unwrap();
            let p = StructuralParams::new(DVector::zeros(n), DVector::from_element(1, 3.0), 1.0).with_gamma(0.05);
            let d = simulate_cliques(&m, &p, &x, seed + 80).unwrap().outcome;
            let fit = fit_2slss_cliques(&d, &x, &m, 2, &TuningPolicy::benchmark(2.0)).unwrap();
            positive += (fit.gamma_hat.unwrap() > 0.0) as usize;
            let p0 = p.clone().with_gamma(0.0);
            let d0 = simulate_cliques(&m, &p0, &x, seed + 80).unwrap().outcome;
            let fit0 = fit_2slss_cliques(&d0, &x, &m, 2, &TuningPolicy::benchmark(2.0)).unwrap();
            null_zero += (fit0.gamma_hat.unwrap() == 0.0) as usize;
        }
        assert!(positive > 10, "{positive}/20");
        assert!(null_zero >= 18, "{null_zero}/20");
    }

    #[test]
    fn cliques_unpenalized_gamma_is_fitted() {
        let (m, x, d, _) = reference(80, 9);
        let policy = TuningPolicy { penalize_gamma: false, ..TuningPolicy::benchmark(2.0) };
        let fit = fit_2slss_cliques(&d, &x, &m, 1, &policy).unwrap();
        assert!(fit.gamma_hat.unwrap() != 0.0);
        assert!(fit_2slss_cliques(&d, &x, &m, 0, &policy).is_err());
    }

    #[test]
    fn oracle_without_support_is_ols() {
        let (m, x, d, _) = reference(50, 10);
        let fit = oracle_2sls(&d, &x, &m, &[]).unwrap();
        assert!((fit.beta - Projector::new(&x).coefficients(&d)).amax() < 1e-12);
    }

    #[test]
    fn oracle_is_exact_without_noise() {
        let m = embed_leader_block(&erdos_renyi(60, 0.1, 11).unwrap(), &chain_block(5)).unwrap();
        let x = draw_design(60, 1, 12).unwrap();
        let eta = StructuralParams::leader_effects(60, 5, 0.5);
        let system = crate::dgp::base_system(&m, &eta).unwrap();
        let d = system.lu().solve(&(&x * DVector::from_element(1, 3.0))).unwrap();
        let fit = oracle_2sls(&d, &x, &m, &[0, 1, 2, 3, 4]).unwrap();
        assert!((fit.beta[0] - 3.0).abs() < 1e-9);
        assert!((fit.eta_s.add_scalar(-0.5)).amax() < 1e-9);
    }

    #[test]
    fn oracle_is_unbiased() {
        let reps = 200;
        let mut draws = Vec::with_capacity(reps);
        for r in 0..reps as u64 {
            let (m, x, d, _) = reference(100, 3000 + r);
            draws.push(oracle_2sls(&d, &x, &m, &[0, 1, 2, 3, 4]).unwrap());
        }
        let check = |vals: Vec<f64>, truth: f64| {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() as f64 - 1.0)).sqrt();
            let se = sd / (vals.len() as f64).sqrt();
            assert!((mean - truth).abs() <= 2.0 * se + 1e-3, "mean {mean} truth {truth} se {se}");
        };
        check(draws.iter().map(|f| f.beta[0]).collect(), 3.0);
        check(draws.iter().map(|f| f.eta_s[0]).collect(), 0.5);
    }
}
