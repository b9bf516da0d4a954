//! Outcome simulation from the structural systems by exact dense solves.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, guarded_solve};
use crate::network::{AdjacencyMatrix, MultiNetwork};

/// Largest accepted 1-norm condition estimate of a system matrix.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Distribution of the structural errors, always scaled to standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorLaw {
    #[default]
    Gaussian,
    /// Uniform on `[-sqrt(3) sigma, sqrt(3) sigma]`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    pub eta0: DVector<f64>,
    pub beta0: DVector<f64>,
    #[serde(default)]
    pub gamma0: Option<f64>,
    #[serde(default)]
    pub eta0_multi: Option<Vec<DVector<f64>>>,
    pub sigma: f64,
    #[serde(default)]
    pub error_law: ErrorLaw,
}

impl StructuralParams {
    pub fn new(eta0: DVector<f64>, beta0: DVector<f64>, sigma: f64) -> Self {
        Self { eta0, beta0, gamma0: None, eta0_multi: None, sigma, error_law: ErrorLaw::Gaussian }
    }

    /// Per-network effects; `eta0` is left as the first network's vector.
    pub fn multi(eta0_multi: Vec<DVector<f64>>, beta0: DVector<f64>, sigma: f64) -> Self {
        let eta0 = eta0_multi.first().cloned().unwrap_or_else(|| DVector::zeros(0));
        Self { eta0, beta0, gamma0: None, eta0_multi: Some(eta0_multi), sigma, error_law: ErrorLaw::Gaussian }
    }

    pub fn with_gamma(mut self, gamma0: f64) -> Self {
        self.gamma0 = Some(gamma0);
        self
    }

    pub fn with_error_law(mut self, law: ErrorLaw) -> Self {
        self.error_law = law;
        self
    }

    /// `n` zeros with `value` on the first `s` entries.
    pub fn leader_effects(n: usize, s: usize, value: f64) -> DVector<f64> {
        DVector::from_fn(n, |i, _| if i < s { value } else { 0.0 })
    }

    fn check_sigma(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !linalg::all_finite_vector(&self.beta0) {
            return Err(Error::NonFinite("beta0"));
        }
        Ok(())
    }

    fn check_base(&self, n: usize, k: usize) -> Result<()> {
        self.check_sigma()?;
        check_len(&self.eta0, n, "eta0")?;
        check_len(&self.beta0, k, "beta0")?;
        let sup = self.eta0.amax();
        if !(sup < 1.0) {
            return Err(Error::InvalidArgument(format!("max |eta0| = {sup} must be below 1")));
        }
        Ok(())
    }
}

fn check_len(v: &DVector<f64>, n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!("{what} has {} entries, expected {n}", v.len())));
    }
    Ok(())
}

/// One simulated outcome with the errors that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub outcome: DVector<f64>,
    pub errors: DVector<f64>,
    /// Condition estimate of the system matrix.
    pub condition: f64,
    /// Spectral radius of the spillover matrix `I - system`.
    pub spectral_radius: f64,
}

/// Covariates with i.i.d. standard normal entries.
pub fn draw_design(n: usize, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument("design needs n, k >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(DMatrix::from_fn(n, k, |_, _| rng.sample(StandardNormal)))
}

pub fn draw_errors(n: usize, sigma: f64, law: ErrorLaw, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match law {
        ErrorLaw::Gaussian => DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal)),
        ErrorLaw::Uniform => {
            let half = 3f64.sqrt() * sigma;
            DVector::from_fn(n, |_, _| rng.gen_range(-half..=half))
        }
    }
}

/// `I - M∘η`.
pub fn base_system(m: &AdjacencyMatrix, eta0: &DVector<f64>) -> Result<DMatrix<f64>> {
    Ok(DMatrix::identity(m.n(), m.n()) - m.col_scale(eta0)?)
}

/// `I - M∘η - γM`.
pub fn cliques_system(m: &AdjacencyMatrix, eta0: &DVector<f64>, gamma0: f64) -> Result<DMatrix<f64>> {
    Ok(base_system(m, eta0)? - m.matrix() * gamma0)
}

/// `I - Σ_j M^j∘η^j`.
pub fn multinet_system(multi: &MultiNetwork, etas: &[DVector<f64>]) -> Result<DMatrix<f64>> {
    if etas.len() != multi.q() {
        return Err(Error::Dimension(format!("{} effect vectors for {} networks", etas.len(), multi.q())));
    }
    let n = multi.n();
    let mut a = DMatrix::identity(n, n);
    for (m, eta) in multi.networks().iter().zip(etas) {
        a -= m.col_scale(eta)?;
    }
    Ok(a)
}

/// Spectral radius of `Σ_j M^j diag(w^j)`.
///
/// Nonzero eigenvalues live on the rows and columns where some weight is
/// nonzero. With one symmetric network and nonnegative weights the block is
/// similar to `D^(1/2) M D^(1/2)` and a symmetric eigensolve is exact;
/// otherwise Gelfand's formula is applied to the block.
pub fn spillover_radius(networks: &[&AdjacencyMatrix], weights: &[DVector<f64>]) -> f64 {
    let Some(first) = networks.first() else { return 0.0 };
    let n = first.n();
    let support: Vec<usize> = (0..n).filter(|&j| weights.iter().any(|w| w[j] != 0.0)).collect();
    if support.is_empty() {
        return 0.0;
    }
    let s = support.len();
    if networks.len() == 1 && first.is_symmetric() && support.iter().all(|&j| weights[0][j] > 0.0) {
        let m = first.matrix();
        let r: Vec<f64> = support.iter().map(|&j| weights[0][j].sqrt()).collect();
        let b = DMatrix::from_fn(s, s, |a, c| r[a] * m[(support[a], support[c])] * r[c]);
        return b.symmetric_eigenvalues().amax();
    }
    let mut b = DMatrix::zeros(s, s);
    for (net, w) in networks.iter().zip(weights) {
        let m = net.matrix();
        for (c, &jc) in support.iter().enumerate() {
            if w[jc] != 0.0 {
                for (a, &ja) in support.iter().enumerate() {
                    b[(a, c)] += m[(ja, jc)] * w[jc];
                }
            }
        }
    }
    gelfand_radius(b)
}

fn gelfand_radius(mut b: DMatrix<f64>) -> f64 {
    // ||B^(2^k)||^(1/2^k), renormalized at every squaring
    let mut log_scale = 0.0;
    let mut pow = 1.0;
    for _ in 0..12 {
        let nrm = b.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        b /= nrm;
        log_scale += nrm.ln() / pow;
        b = &b * &b;
        pow *= 2.0;
    }
    let nrm = b.norm();
    if nrm == 0.0 {
        return 0.0;
    }
    (log_scale + nrm.ln() / pow).exp()
}

fn check_radius(radius: f64) -> Result<()> {
    if radius < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("spillover matrix has spectral radius {radius:.4}; the outcome process is explosive")))
    }
}

fn solve_draw(system: &DMatrix<f64>, x: &DMatrix<f64>, params: &StructuralParams, seed: u64, spectral_radius: f64) -> Result<Draw> {
    check_radius(spectral_radius)?;
    if !linalg::all_finite_matrix(x) {
        return Err(Error::NonFinite("covariates"));
    }

    let errors = draw_errors(system.nrows(), params.sigma, params.error_law, seed);
    let rhs = x * &params.beta0 + &errors;
    let (outcome, condition) = guarded_solve(system, &rhs, CONDITION_LIMIT)?;
    Ok(Draw { outcome, errors, condition, spectral_radius })
}

fn check_x(x: &DMatrix<f64>, n: usize) -> Result<()> {
    if x.nrows() != n {
        return Err(Error::Dimension(format!("covariates have {} rows for {n} nodes", x.nrows())));
    }
    Ok(())
}

/// `D = (I - M∘η0)^{-1} (X β0 + ε)`.
pub fn simulate_base(m: &AdjacencyMatrix, params: &StructuralParams, x: &DMatrix<f64>, seed: u64) -> Result<Draw> {
    check_x(x, m.n())?;
    params.check_base(m.n(), x.ncols())?;
    let radius = spillover_radius(&[m], std::slice::from_ref(&params.eta0));
    solve_draw(&base_system(m, &params.eta0)?, x, params, seed, radius)
}

/// `D = (I - M∘η0 - γ0 M)^{-1} (X β0 + ε)`; `gamma0 = None` means zero.
pub fn simulate_cliques(m: &AdjacencyMatrix, params: &StructuralParams, x: &DMatrix<f64>, seed: u64) -> Result<Draw> {
    check_x(x, m.n())?;
    params.check_sigma()?;
    check_len(&params.eta0, m.n(), "eta0")?;
    check_len(&params.beta0, x.ncols(), "beta0")?;
    let gamma = params.gamma0.unwrap_or(0.0);
    if !gamma.is_finite() {
        return Err(Error::NonFinite("gamma0"));
    }
    let sup = params.eta0.iter().map(|e| (e + gamma).abs()).fold(0.0, f64::max);
    if !(sup < 1.0) {
        return Err(Error::InvalidArgument(format!("max |eta0 + gamma0| = {sup} must be below 1")));
    }
    let w = params.eta0.add_scalar(gamma);
    let radius = spillover_radius(&[m], std::slice::from_ref(&w));
    solve_draw(&cliques_system(m, &params.eta0, gamma)?, x, params, seed, radius)
}

/// `D = (I - Σ_j M^j∘η0^j)^{-1} (X β0 + ε)`.
pub fn simulate_multinet(multi: &MultiNetwork, params: &StructuralParams, x: &DMatrix<f64>, seed: u64) -> Result<Draw> {
    let n = multi.n();
    check_x(x, n)?;
    params.check_sigma()?;
    check_len(&params.beta0, x.ncols(), "beta0")?;
    let etas = params
        .eta0_multi
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("multi-network simulation needs eta0_multi".into()))?;
    for eta in etas {
        check_len(eta, n, "eta0 for a network")?;
    }
    let total: f64 = etas.iter().map(|e| e.amax()).sum();
    if !(total < 1.0) {
        return Err(Error::InvalidArgument(format!("sum of max |eta0^j| = {total} must be below 1")));
    }
    let nets: Vec<&AdjacencyMatrix> = multi.networks().iter().collect();
    let radius = spillover_radius(&nets, etas);
    solve_draw(&multinet_system(multi, etas)?, x, params, seed, radius)
}
