//! De-biased estimates, standard errors, confidence intervals and
//! Benjamini-Hochberg testing for fitted models.
//!
//! The default [`DebiasForm::Desparsified`] correction uses the observed
//! endogenous regressors `Z = M∘D` on the partialled-out scale `G = W Z`:
//!
//! ```text
//! e = eta + Θ Z'W (D - Z eta) / n,    Var(e_j) = σ² [Θ Σ Θ']_jj / n,    Σ = Z'WZ / n
//! ```
//!
//! with `Θ` the nodewise-regression inverse of `Σ`. [`DebiasForm::Displayed`]
//! instead builds `X̃ = Z'WẐ/n` from the first-stage fit and applies
//! `e = eta + Θ X̃'Ẑ'W(D - Z eta)/n` with `Var = σ² Θ X̃'Ω X̃ Θ'/n`,
//! `Ω = Ẑ'WẐ/n`, `Θ` nodewise on `X̃` taken as a `p`-row design.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::lasso::engine::{GramSystem, PenaltySpec};
use crate::lasso::{fit_system, lasso_fit, PenalizedProblem, SolverConfig};
use crate::linalg::{self, Projector};
use crate::estimator::FitResult;
use crate::network::{AdjacencyMatrix, MultiNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebiasForm {
    /// Score and nodewise inverse built from the observed regressors.
    Desparsified,
    /// Score from the fitted regressors; nodewise directions from their Gram
    /// matrix, normalized against the observed-by-fitted cross product.
    #[default]
    Instrumented,
    /// Nodewise on the observed-by-fitted cross product as a p-row design.
    Displayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceOptions {
    pub level: f64,
    pub fdr_q: f64,
    /// Nodewise penalty constant: `lambda = c_node * sqrt(log p / rows)`.
    pub c_node: f64,
    /// Overrides `c_node` when set.
    pub lambda_node: Option<f64>,
    pub form: DebiasForm,
    pub solver: SolverConfig,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self { level: 0.95, fdr_q: 0.05, c_node: 0.5, lambda_node: None, form: DebiasForm::Instrumented, solver: SolverConfig::default() }
    }
}

impl InferenceOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!("confidence level {} outside (0, 1)", self.level)));
        }
        if !(self.fdr_q > 0.0 && self.fdr_q < 1.0) {
            return Err(Error::InvalidArgument(format!("FDR target {} outside (0, 1)", self.fdr_q)));
        }
        if !(self.c_node >= 0.0) || !self.c_node.is_finite() {
            return Err(Error::InvalidArgument("c_node must be nonnegative".into()));
        }
        if let Some(l) = self.lambda_node {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::InvalidArgument("lambda_node must be nonnegative".into()));
            }
        }
        self.solver.validate()
    }

    fn node_lambda(&self, p: usize, rows: usize) -> f64 {
        self.lambda_node.unwrap_or_else(|| {
            if p < 2 {
                0.0
            } else {
                self.c_node * ((p as f64).ln() / rows as f64).sqrt()
            }
        })
    }
}

/// Inference on one scalar coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarInference {
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    /// De-biased node effects, network by network (`n * q` entries).
    pub e_hat: DVector<f64>,
    pub se_eta: DVector<f64>,
    pub ci_lower: DVector<f64>,
    pub ci_upper: DVector<f64>,
    pub p_values: DVector<f64>,
    pub b_hat: DVector<f64>,
    pub se_beta: DVector<f64>,
    pub beta_ci_lower: DVector<f64>,
    pub beta_ci_upper: DVector<f64>,
    pub beta_p_values: DVector<f64>,
    /// Homogeneous effect (cliques model only).
    pub gamma: Option<ScalarInference>,
    pub ci_level: f64,
    pub fdr_q: f64,
    /// Stacked indices rejected by the step-up rule over all node effects.
    pub bh_rejections: Vec<usize>,
    pub sigma2_hat: f64,
    pub lambda_node: f64,
    /// Coefficients without usable inference (isolated nodes, degenerate nodewise fits).
    pub flagged: Vec<usize>,
    pub n_networks: usize,
}

impl InferenceResult {
    pub fn n(&self) -> usize {
        self.e_hat.len() / self.n_networks.max(1)
    }

    /// Rejections grouped by network, as node indices.
    pub fn rejections_per_network(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut out = vec![Vec::new(); self.n_networks];
        for &i in &self.bh_rejections {
            out[i / n].push(i % n);
        }
        out
    }
}

/// `W = I - X (X'X)^+ X'`.
pub fn residual_projection(x: &DMatrix<f64>) -> DMatrix<f64> {
    Projector::new(x).matrix()
}

/// Approximate inverse from nodewise regressions.
#[derive(Debug, Clone, PartialEq)]
pub struct NodewiseInverse {
    pub theta: DMatrix<f64>,
    pub tau2: DVector<f64>,
    /// Columns whose `tau2` fell below the numerical floor; their rows are zero.
    pub failed: Vec<usize>,
}

/// Relative floor on `tau_j^2` against the column's own second moment.
const TAU_FLOOR: f64 = 1e-10;

/// Nodewise LASSO of every column of `g` on the others at `lambda_node`.
pub fn nodewise_inverse(g: &DMatrix<f64>, lambda_node: f64, config: &SolverConfig) -> Result<NodewiseInverse> {
    if !(lambda_node >= 0.0) || !lambda_node.is_finite() {
        return Err(Error::InvalidArgument("lambda_node must be nonnegative".into()));
    }
    if !linalg::all_finite_matrix(g) {
        return Err(Error::NonFinite("nodewise design"));
    }
    let rows = g.nrows().max(1) as f64;
    nodewise_from_gram(&(g.tr_mul(g) / rows), lambda_node, config)
}

/// Nodewise regressions given the Gram matrix `G'G / rows`.
///
/// The regressions run on the correlation form of the Gram matrix so the
/// penalty acts on every column at the same scale; `theta` and `tau2` are
/// mapped back to the original columns.
pub(crate) fn nodewise_from_gram(gram: &DMatrix<f64>, lambda_node: f64, config: &SolverConfig) -> Result<NodewiseInverse> {
    let p = gram.nrows();
    let scale = DVector::from_fn(p, |j, _| if gram[(j, j)] > 0.0 { gram[(j, j)].sqrt() } else { 0.0 });
    let corr = DMatrix::from_fn(p, p, |a, b| if scale[a] > 0.0 && scale[b] > 0.0 { gram[(a, b)] / (scale[a] * scale[b]) } else { 0.0 });
    let inner = SolverConfig { standardize: false, ..*config };
    let column = |j: usize| -> Result<(DVector<f64>, f64)> {
        let mut row = DVector::zeros(p);
        if !(scale[j] > 0.0) {
            return Ok((row, 0.0));
        }
        if p == 1 {
            row[0] = 1.0 / gram[(0, 0)];
            return Ok((row, gram[(0, 0)]));
        }
        let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
        let sys = GramSystem {
            gram: DMatrix::from_fn(p - 1, p - 1, |a, b| corr[(others[a], others[b])]),
            corr: DVector::from_fn(p - 1, |a, _| corr[(others[a], j)]),
            yy: 1.0,
        };
        let mask: Vec<bool> = others.iter().map(|&k| scale[k] > 0.0).collect();
        let pen = PenaltySpec { mask: &mask, groups: &[], lambda_l1: lambda_node, lambda_group: 0.0 };
        let gamma = fit_system(&sys, pen, None, &inner)?.coefficients;
        let tau2 = 1.0 - sys.corr.dot(&gamma);
        if !(tau2 > TAU_FLOOR) {
            return Ok((row, tau2 * gram[(j, j)]));
        }
        row[j] = 1.0 / (tau2 * scale[j] * scale[j]);
        for (a, &k) in others.iter().enumerate() {
            if scale[k] > 0.0 {
                row[k] = -gamma[a] / (tau2 * scale[j] * scale[k]);
            }
        }
        Ok((row, tau2 * gram[(j, j)]))
    };
    #[cfg(feature = "parallel")]
    let cols: Vec<Result<(DVector<f64>, f64)>> = {
        use rayon::prelude::*;
        (0..p).into_par_iter().map(column).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let cols: Vec<Result<(DVector<f64>, f64)>> = (0..p).map(column).collect();

    let mut theta = DMatrix::zeros(p, p);
    let mut tau2 = DVector::zeros(p);
    let mut failed = Vec::new();
    for (j, c) in cols.into_iter().enumerate() {
        let (row, t) = c?;
        tau2[j] = t;
        if row[j] == 0.0 {
            failed.push(j);
        }
        theta.set_row(j, &row.transpose());
    }
    Ok(NodewiseInverse { theta, tau2, failed })
}

/// Where a regressor column's coefficient lives in the output.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Eta(usize),
    Gamma,
}

/// Endogenous regressors of a fitted model on observed and first-stage outcomes.
struct Regressors {
    z: DMatrix<f64>,
    z_hat: DMatrix<f64>,
    coef: DVector<f64>,
    slots: Vec<Slot>,
}

fn regressors(d: &DVector<f64>, networks: &[AdjacencyMatrix], fit: &FitResult, cliques: Option<&AdjacencyMatrix>) -> Result<Regressors> {
    let n = d.len();
    let mut slots = Vec::new();
    let mut cols_obs: Vec<DVector<f64>> = Vec::new();
    let mut cols_hat: Vec<DVector<f64>> = Vec::new();
    let mut coef = Vec::new();
    if let Some(m) = cliques {
        cols_obs.push(m.matrix() * d);
        cols_hat.push(m.matrix() * &fit.d_hat);
        coef.push(fit.gamma_hat.unwrap_or(0.0));
        slots.push(Slot::Gamma);
    }
    for (q, m) in networks.iter().enumerate() {
        for j in 0..n {
            if m.degree(j) == 0 {
                continue;
            }
            let col = m.matrix().column(j);
            cols_obs.push(col * d[j]);
            cols_hat.push(col * fit.d_hat[j]);
            coef.push(fit.eta_hat[q * n + j]);
            slots.push(Slot::Eta(q * n + j));
        }
    }
    let p = slots.len();
    let z = DMatrix::from_fn(n, p, |i, c| cols_obs[c][i]);
    let z_hat = DMatrix::from_fn(n, p, |i, c| cols_hat[c][i]);
    Ok(Regressors { z, z_hat, coef: DVector::from_vec(coef), slots })
}

fn check_fit(d: &DVector<f64>, x: &DMatrix<f64>, n: usize, q: usize, fit: &FitResult) -> Result<()> {
    if d.len() != n || x.nrows() != n {
        return Err(Error::Dimension("outcome or covariates disagree with the network size".into()));
    }
    if fit.eta_hat.len() != n * q || fit.d_hat.len() != n || fit.beta_hat.len() != x.ncols() {
        return Err(Error::Dimension("fit does not match the data".into()));
    }
    if !linalg::all_finite_vector(d) {
        return Err(Error::NonFinite("outcome"));
    }
    Ok(())
}

/// `||D - Z eta - X beta||^2 / (n - |S| - k)` over the observed regressors.
pub fn estimate_sigma2(d: &DVector<f64>, x: &DMatrix<f64>, m: &AdjacencyMatrix, fit: &FitResult) -> Result<f64> {
    estimate_sigma2_networks(d, x, std::slice::from_ref(m), fit, None)
}

fn estimate_sigma2_networks(
    d: &DVector<f64>,
    x: &DMatrix<f64>,
    networks: &[AdjacencyMatrix],
    fit: &FitResult,
    cliques: Option<&AdjacencyMatrix>,
) -> Result<f64> {
    let n = d.len();
    check_fit(d, x, networks[0].n(), networks.len(), fit)?;
    let reg = regressors(d, networks, fit, cliques)?;
    let selected = reg.coef.iter().filter(|&&c| c != 0.0).count();
    let k = x.ncols();
    if n <= selected + k {
        return Err(Error::DegreesOfFreedom { n, selected, k });
    }
    let resid = d - &reg.z * &reg.coef - x * &fit.beta_hat;
    Ok(resid.norm_squared() / (n - selected - k) as f64)
}

/// Two-sided normal intervals and p-values for `H0: e_j = 0`.
pub fn confidence_intervals(e_hat: &DVector<f64>, se: &DVector<f64>, level: f64) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} outside (0, 1)")));
    }
    if e_hat.len() != se.len() {
        return Err(Error::Dimension("estimates and standard errors differ in length".into()));
    }
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);
    let mut lo = DVector::zeros(e_hat.len());
    let mut hi = DVector::zeros(e_hat.len());
    let mut p = DVector::zeros(e_hat.len());
    for j in 0..e_hat.len() {
        let s = interval(e_hat[j], se[j], z);
        lo[j] = s.0;
        hi[j] = s.1;
        p[j] = s.2;
    }
    Ok((lo, hi, p))
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn normal_quantile(prob: f64) -> f64 {
    standard_normal().inverse_cdf(prob)
}

/// `(lower, upper, p)` for one estimate.
fn interval(e: f64, se: f64, z: f64) -> (f64, f64, f64) {
    if !se.is_finite() || !e.is_finite() {
        return (f64::NEG_INFINITY, f64::INFINITY, 1.0);
    }
    if se == 0.0 {
        return (e, e, if e == 0.0 { 1.0 } else { 0.0 });
    }
    let t = (e / se).abs();
    let p = (2.0 * standard_normal().cdf(-t)).min(1.0);
    (e - z * se, e + z * se, p)
}

/// Benjamini-Hochberg step-up rule; returns rejected indices in ascending order.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Result<Vec<usize>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("FDR target {q} outside (0, 1)")));
    }
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument("p-values must lie in [0, 1]".into()));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut cutoff = None;
    for (rank, &i) in order.iter().enumerate() {
        if p_values[i] <= (rank + 1) as f64 * q / m as f64 {
            cutoff = Some(p_values[i]);
        }
    }
    let mut out: Vec<usize> = match cutoff {
        Some(c) => (0..m).filter(|&i| p_values[i] <= c).collect(),
        None => Vec::new(),
    };
    out.sort_unstable();
    Ok(out)
}

/// De-biased node effects and standard errors for the single-network model.
pub fn debias_eta(
    d: &DVector<f64>,
    x: &DMatrix<f64>,
    m: &AdjacencyMatrix,
    fit: &FitResult,
    options: &InferenceOptions,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let r = infer_networks(d, x, std::slice::from_ref(m), fit, None, options)?;
    Ok((r.e_hat, r.se_eta))
}

/// De-biased covariate effects and standard errors for the single-network model.
pub fn debias_beta(
    d: &DVector<f64>,
    x: &DMatrix<f64>,
    m: &AdjacencyMatrix,
    fit: &FitResult,
    options: &InferenceOptions,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let r = infer_networks(d, x, std::slice::from_ref(m), fit, None, options)?;
    Ok((r.b_hat, r.se_beta))
}

/// Full inference for a single-network fit.
pub fn infer(d: &DVector<f64>, x: &DMatrix<f64>, m: &AdjacencyMatrix, fit: &FitResult, options: &InferenceOptions) -> Result<InferenceResult> {
    infer_networks(d, x, std::slice::from_ref(m), fit, None, options)
}

/// Full inference for a cliques fit, including the homogeneous effect.
pub fn infer_cliques(d: &DVector<f64>, x: &DMatrix<f64>, m: &AdjacencyMatrix, fit: &FitResult, options: &InferenceOptions) -> Result<InferenceResult> {
    if fit.gamma_hat.is_none() {
        return Err(Error::InvalidArgument("fit has no homogeneous effect".into()));
    }
    infer_networks(d, x, std::slice::from_ref(m), fit, Some(m), options)
}

/// Stacked-design inference for a multiple-network fit.
pub fn debias_multinet(d: &DVector<f64>, x: &DMatrix<f64>, multi: &MultiNetwork, fit: &FitResult, options: &InferenceOptions) -> Result<InferenceResult> {
    infer_networks(d, x, multi.networks(), fit, None, options)
}

fn infer_networks(
    d: &DVector<f64>,
    x: &DMatrix<f64>,
    networks: &[AdjacencyMatrix],
    fit: &FitResult,
    cliques: Option<&AdjacencyMatrix>,
    options: &InferenceOptions,
) -> Result<InferenceResult> {
    options.validate()?;
    let n = networks[0].n();
    let q = networks.len();
    check_fit(d, x, n, q, fit)?;
    let sigma2 = estimate_sigma2_networks(d, x, networks, fit, cliques)?;
    let reg = regressors(d, networks, fit, cliques)?;
    let p = reg.slots.len();
    let nf = n as f64;
    let proj = Projector::new(x);
    let resid = d - &reg.z * &reg.coef;

    let mut e_full = fit.eta_hat.clone();
    let mut se_full = DVector::from_element(n * q, f64::INFINITY);
    let mut gamma_est = None;
    let mut lambda_node = 0.0;
    if p > 0 {
        let g = proj.apply_matrix(&reg.z);
        let (e, var, lam, failed) = match options.form {
            DebiasForm::Desparsified => {
                let sigma = g.tr_mul(&g) / nf;
                let lam = options.node_lambda(p, n);
                let nw = nodewise_from_gram(&sigma, lam, &options.solver)?;
                let corr = &nw.theta * g.tr_mul(&resid) / nf;
                let var = &nw.theta * &sigma * nw.theta.transpose();
                (&reg.coef + corr, var, lam, nw.failed)
            }
            DebiasForm::Instrumented => {
                let g_hat = proj.apply_matrix(&reg.z_hat);
                let sigma = g_hat.tr_mul(&g_hat) / nf;
                let lam = options.node_lambda(p, n);
                let nw = nodewise_from_gram(&sigma, lam, &options.solver)?;
                // rows rescaled so that diag(Θ Ĝ'G / n) = 1
                let cross = g_hat.tr_mul(&g) / nf;
                let mut theta = nw.theta;
                let mut failed = nw.failed;
                for j in 0..p {
                    let norm = theta.row(j).dot(&cross.column(j).transpose());
                    if norm.abs() > 1e-12 && !failed.contains(&j) {
                        theta.row_mut(j).unscale_mut(norm);
                    } else if !failed.contains(&j) {
                        failed.push(j);
                    }
                }
                let corr = &theta * g_hat.tr_mul(&resid) / nf;
                let var = &theta * &sigma * theta.transpose();
                (&reg.coef + corr, var, lam, failed)
            }
            DebiasForm::Displayed => {
                let g_hat = proj.apply_matrix(&reg.z_hat);
                let xt = g.tr_mul(&g_hat) / nf;
                let omega = g_hat.tr_mul(&g_hat) / nf;
                let lam = options.node_lambda(p, p);
                let nw = nodewise_inverse(&xt, lam, &options.solver)?;
                let a = &nw.theta * xt.transpose();
                let corr = &a * g_hat.tr_mul(&resid) / nf;
                let var = &a * omega * a.transpose();
                (&reg.coef + corr, var, lam, nw.failed)
            }
        };
        lambda_node = lam;
        for (c, slot) in reg.slots.iter().enumerate() {
            let ok = !failed.contains(&c) && var[(c, c)] >= 0.0;
            let se = if ok { (sigma2 * var[(c, c)] / nf).sqrt() } else { f64::INFINITY };
            match *slot {
                Slot::Eta(i) => {
                    e_full[i] = e[c];
                    se_full[i] = se;
                }
                Slot::Gamma => gamma_est = Some((e[c], se)),
            }
        }
    }
    let flagged: Vec<usize> = (0..n * q).filter(|&i| !se_full[i].is_finite()).collect();

    let (b_hat, se_beta) = debias_beta_inner(d, x, &reg, &fit.beta_hat, sigma2, options)?;
    let (lo, hi, pv) = confidence_intervals(&e_full, &se_full, options.level)?;
    let (blo, bhi, bpv) = confidence_intervals(&b_hat, &se_beta, options.level)?;
    let bh = bh_fdr(pv.as_slice(), options.fdr_q)?;
    let z = normal_quantile(1.0 - (1.0 - options.level) / 2.0);
    let gamma = gamma_est.map(|(e, se)| {
        let (ci_lower, ci_upper, p_value) = interval(e, se, z);
        ScalarInference { estimate: e, se, ci_lower, ci_upper, p_value }
    });
    Ok(InferenceResult {
        e_hat: e_full,
        se_eta: se_full,
        ci_lower: lo,
        ci_upper: hi,
        p_values: pv,
        b_hat,
        se_beta,
        beta_ci_lower: blo,
        beta_ci_upper: bhi,
        beta_p_values: bpv,
        gamma,
        ci_level: options.level,
        fdr_q: options.fdr_q,
        bh_rejections: bh,
        sigma2_hat: sigma2,
        lambda_node,
        flagged,
        n_networks: q,
    })
}

/// Covariate de-bias: nodewise LASSO of each covariate on the observed
/// regressors (other covariates unpenalized) with residual `v`, then
/// `b = beta + v'(D - Z eta - X beta) / (v'x)` (desparsified) or
/// `b = beta - v'((Ẑ - Z) eta) / (v'x)` (displayed); `se = σ sqrt(v'v) / |v'x|`.
fn debias_beta_inner(
    d: &DVector<f64>,
    x: &DMatrix<f64>,
    reg: &Regressors,
    beta_hat: &DVector<f64>,
    sigma2: f64,
    options: &InferenceOptions,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (n, k) = x.shape();
    let p = reg.slots.len();
    let correction = match options.form {
        DebiasForm::Desparsified | DebiasForm::Instrumented => -(d - &reg.z * &reg.coef - x * beta_hat),
        DebiasForm::Displayed => (&reg.z_hat - &reg.z) * &reg.coef,
    };
    let mut b = beta_hat.clone();
    let mut se = DVector::from_element(k, f64::INFINITY);
    for c in 0..k {
        let xc = x.column(c).into_owned();
        let others: Vec<usize> = (0..k).filter(|&o| o != c).collect();
        let mut design = DMatrix::zeros(n, others.len() + p);
        for (a, &o) in others.iter().enumerate() {
            design.set_column(a, &x.column(o));
        }
        if p > 0 {
            let zc = if options.form == DebiasForm::Instrumented { &reg.z_hat } else { &reg.z };
            design.view_mut((0, others.len()), (n, p)).copy_from(zc);
        }
        let v = if design.ncols() == 0 {
            xc.clone()
        } else {
            let mut mask = vec![true; design.ncols()];
            for m in mask.iter_mut().take(others.len()) {
                *m = false;
            }
            let lam = options.node_lambda(p.max(1), n);
            let problem = PenalizedProblem::new(design.clone(), xc.clone(), mask)?.with_lambda(lam);
            let gamma = lasso_fit(&problem, &options.solver)?.coefficients;
            &xc - &design * gamma
        };
        let den = v.dot(&xc);
        if !(den.abs() > 1e-10 * xc.norm_squared()) {
            continue;
        }
        b[c] = beta_hat[c] - v.dot(&correction) / den;
        se[c] = (sigma2 * v.norm_squared()).sqrt() / den.abs();
    }
    Ok((b, se))
}

#[cfg(test)]
mod tests;
