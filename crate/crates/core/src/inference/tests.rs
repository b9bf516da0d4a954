use super::*;
use crate::dgp::{draw_design, simulate_base, StructuralParams};
use crate::estimator::{fit_2slss, fit_2slss_multinet, Lambdas, StageDiagnostics, TuningPolicy};
use crate::lasso::kkt_residual;
use crate::network::{chain_block, embed_leader_block, erdos_renyi};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn manual_fit(eta: DVector<f64>, beta: DVector<f64>, d_hat: DVector<f64>) -> FitResult {
    let selected_set = eta.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i).collect();
    FitResult {
        beta_hat: beta,
        eta_hat: eta,
        gamma_hat: None,
        selected_set,
        d_hat,
        lambdas: Lambdas::default(),
        diagnostics: StageDiagnostics::default(),
        n_networks: 1,
    }
}

fn reference(n: usize, seed: u64) -> (AdjacencyMatrix, DMatrix<f64>, DVector<f64>) {
    let m = embed_leader_block(&erdos_renyi(n, 0.1, seed).unwrap(), &chain_block(5)).unwrap();
    let x = draw_design(n, 1, seed + 1).unwrap();
    let p = StructuralParams::new(StructuralParams::leader_effects(n, 5, 0.5), DVector::from_element(1, 3.0), 1.0);
    let d = simulate_base(&m, &p, &x, seed + 2).unwrap().outcome;
    (m, x, d)
}

#[test]
fn projection_properties() {
    assert_eq!(residual_projection(&DMatrix::zeros(4, 2)), DMatrix::identity(4, 4));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = gaussian(&mut rng, 12, 3);
    let w = residual_projection(&x);
    assert!((&w * &x).amax() < 1e-10);
    assert!((&w * &w - &w).amax() < 1e-10);
    assert!((&w - w.transpose()).amax() < 1e-12);
}

#[test]
fn nodewise_orthogonal_columns() {
    let g = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, 1.0, 2.0, 1.0, -2.0]);
    let nw = nodewise_inverse(&g, 0.0, &SolverConfig::default()).unwrap();
    assert!((nw.theta[(0, 0)] - 4.0 / 4.0).abs() < 1e-12);
    assert!((nw.theta[(1, 1)] - 4.0 / 10.0).abs() < 1e-12);
    assert!(nw.theta[(0, 1)].abs() < 1e-12 && nw.theta[(1, 0)].abs() < 1e-12);
}

#[test]
fn nodewise_unpenalized_is_exact_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = gaussian(&mut rng, 40, 6);
    let cfg = SolverConfig { tolerance: 1e-12, ..SolverConfig::default() };
    let nw = nodewise_inverse(&g, 0.0, &cfg).unwrap();
    let sigma = g.tr_mul(&g) / 40.0;
    assert!((&nw.theta * sigma - DMatrix::identity(6, 6)).amax() < 1e-6);
    assert!(nw.failed.is_empty());
}

#[test]
fn nodewise_rows_satisfy_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = gaussian(&mut rng, 30, 8);
    let cfg = SolverConfig { tolerance: 1e-10, ..SolverConfig::default() };
    let lam = 0.15;
    let nw = nodewise_inverse(&g, lam, &cfg).unwrap();
    for j in 0..8 {
        let others: Vec<usize> = (0..8).filter(|&k| k != j).collect();
        let design = linalg::select_columns(&g, &others);
        // both sides on the correlation scale
        let sj = (g.column(j).norm_squared() / 30.0).sqrt();
        let problem = PenalizedProblem::all_penalized(design, g.column(j) / sj).unwrap().with_lambda(lam);
        let (scaled, scales) = problem.standardized();
        let gamma = DVector::from_fn(7, |a, _| -nw.theta[(j, others[a])] / nw.theta[(j, j)]);
        assert!(kkt_residual(&scaled, &(gamma.component_mul(&scales) / sj)).unwrap() <= 1e-8, "row {j}");
        let tau2 = g.column(j).dot(&(g.column(j) - linalg::select_columns(&g, &others) * &gamma)) / 30.0;
        assert!((nw.tau2[j] - tau2).abs() < 1e-10);
    }
}

#[test]
fn nodewise_flags_degenerate_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut g = gaussian(&mut rng, 20, 3);
    g.set_column(2, &(g.column(0) * 2.0));
    g.set_column(1, &DVector::zeros(20));
    let nw = nodewise_inverse(&g, 0.0, &SolverConfig::default()).unwrap();
    assert!(nw.failed.contains(&1));
    assert!(nw.failed.contains(&0) || nw.failed.contains(&2));
}

#[test]
fn correction_vanishes_at_exact_fit() {
    let (m, x, _) = reference(40, 5);
    let eta = StructuralParams::leader_effects(40, 5, 0.5);
    // any D with D = (M∘D) eta + X beta: solve the noiseless system
    let system = crate::dgp::base_system(&m, &eta).unwrap();
    let d = system.lu().solve(&(&x * DVector::from_element(1, 3.0))).unwrap();
    let fit = manual_fit(eta.clone(), DVector::from_element(1, 3.0), d.clone());
    for form in [DebiasForm::Desparsified, DebiasForm::Displayed] {
        let opts = InferenceOptions { form, ..InferenceOptions::default() };
        let r = infer(&d, &x, &m, &fit, &opts).unwrap();
        assert!((&r.e_hat - &eta).amax() < 1e-9, "{form:?}");
        assert!((r.b_hat[0] - 3.0).abs() < 1e-9);
        assert!(r.sigma2_hat < 1e-20);
    }
}

/// Displayed form for one leader, evaluated with explicit matrices.
#[test]
fn displayed_form_single_leader_by_hand() {
    let m = AdjacencyMatrix::from_edges(4, &[(0, 1), (0, 2)]).unwrap();
    let x = DMatrix::from_column_slice(4, 1, &[0.5, -1.0, 2.0, 1.5]);
    let d = DVector::from_vec(vec![1.0, 2.5, -0.5, 3.0]);
    let d_hat = DVector::from_vec(vec![1.2, 2.0, -0.1, 2.6]);
    let mut eta = DVector::zeros(4);
    eta[0] = 0.3;
    let fit = manual_fit(eta.clone(), DVector::from_element(1, 0.8), d_hat.clone());
    let opts = InferenceOptions { form: DebiasForm::Displayed, ..InferenceOptions::default() };
    let r = infer(&d, &x, &m, &fit, &opts).unwrap();

    let w = DMatrix::identity(4, 4) - &x * (x.transpose() * &x).try_inverse().unwrap() * x.transpose();
    // nodes 1 and 2 have one link each (to node 0); node 3 is isolated
    let cols = [0usize, 1, 2];
    let z = DMatrix::from_fn(4, 3, |i, c| m.matrix()[(i, cols[c])] * d[cols[c]]);
    let zh = DMatrix::from_fn(4, 3, |i, c| m.matrix()[(i, cols[c])] * d_hat[cols[c]]);
    let xt = z.transpose() * &w * &zh / 4.0;
    let om = zh.transpose() * &w * &zh / 4.0;
    // nodewise on X̃ as a 3-row design at lambda = 0.7 sqrt(log 3 / 3)
    let nw = nodewise_inverse(&xt, 0.7 * (3f64.ln() / 3.0).sqrt(), &SolverConfig::default()).unwrap();
    let coef = DVector::from_vec(vec![0.3, 0.0, 0.0]);
    let resid = &d - &z * &coef;
    let e = &coef + &nw.theta * xt.transpose() * zh.transpose() * &w * resid / 4.0;
    let resid_full = &d - &z * &coef - &x * 0.8;
    let sigma2 = resid_full.norm_squared() / (4.0 - 1.0 - 1.0);
    let var = &nw.theta * xt.transpose() * om * &xt * nw.theta.transpose();
    for (c, &j) in cols.iter().enumerate() {
        assert!((r.e_hat[j] - e[c]).abs() < 1e-10);
        assert!((r.se_eta[j] - (sigma2 * var[(c, c)] / 4.0).sqrt()).abs() < 1e-10);
    }
    assert!(r.se_eta[3].is_infinite() && r.p_values[3] == 1.0);
    assert_eq!(r.flagged, vec![3]);
}

#[test]
fn beta_without_network_is_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = gaussian(&mut rng, 50, 2);
    let d = &x * DVector::from_vec(vec![1.0, -1.0]) + gaussian(&mut rng, 50, 1).column(0);
    let m = AdjacencyMatrix::empty(50);
    let fit = fit_2slss(&d, &x, &m, &TuningPolicy::benchmark(2.0)).unwrap();
    let r = infer(&d, &x, &m, &fit, &InferenceOptions::default()).unwrap();
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let ols = &xtx_inv * x.transpose() * &d;
    let sigma2 = (&d - &x * &ols).norm_squared() / 48.0;
    assert!((&r.b_hat - &ols).amax() < 1e-10);
    for c in 0..2 {
        assert!((r.se_beta[c] - (sigma2 * xtx_inv[(c, c)]).sqrt()).abs() < 1e-10);
    }
    assert!((r.sigma2_hat - sigma2).abs() < 1e-12);
}

#[test]
fn beta_correction_vanishes_when_first_stage_is_exact() {
    let (m, x, d) = reference(60, 7);
    let fit = manual_fit(DVector::zeros(60), DVector::from_element(1, 2.0), d.clone());
    let options = InferenceOptions { form: DebiasForm::Displayed, ..InferenceOptions::default() };
    let (b, _) = debias_beta(&d, &x, &m, &fit, &options).unwrap();
    assert_eq!(b[0], 2.0);
}

#[test]
fn sigma2_examples() {
    let x = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]);
    let d = &x * 2.0;
    let m = AdjacencyMatrix::empty(5);
    let fit = manual_fit(DVector::zeros(5), DVector::from_element(1, 2.0), d.column(0).into_owned());
    assert_eq!(estimate_sigma2(&d.column(0).into_owned(), &x, &m, &fit).unwrap(), 0.0);

    let mut est = Vec::new();
    for seed in 0..20 {
        let x = draw_design(1000, 1, seed).unwrap();
        let p = StructuralParams::new(DVector::zeros(1000), DVector::from_element(1, 1.0), 1.0);
        let m = AdjacencyMatrix::empty(1000);
        let d = simulate_base(&m, &p, &x, seed + 50).unwrap().outcome;
        let fit = fit_2slss(&d, &x, &m, &TuningPolicy::benchmark(2.0)).unwrap();
        est.push(estimate_sigma2(&d, &x, &m, &fit).unwrap());
    }
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    assert!((mean - 1.0).abs() < 0.1, "{mean}");

    let fit = manual_fit(DVector::from_element(5, 0.1), DVector::from_element(1, 2.0), DVector::zeros(5));
    let ring = AdjacencyMatrix::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
    assert!(matches!(
        estimate_sigma2(&DVector::zeros(5), &x, &ring, &fit),
        Err(Error::DegreesOfFreedom { .. })
    ));
}

#[test]
fn interval_examples() {
    let (lo, hi, p) = confidence_intervals(&DVector::from_vec(vec![0.0]), &DVector::from_vec(vec![1.0]), 0.95).unwrap();
    assert!((lo[0] + 1.959964).abs() < 1e-5 && (hi[0] - 1.959964).abs() < 1e-5);
    assert!((p[0] - 1.0).abs() < 1e-12);
    let (_, _, p) = confidence_intervals(&DVector::from_vec(vec![1.96]), &DVector::from_vec(vec![1.0]), 0.95).unwrap();
    assert!((p[0] - 0.05).abs() < 5e-5);
    let (lo, hi, p) =
        confidence_intervals(&DVector::from_vec(vec![0.3, 0.0]), &DVector::from_vec(vec![0.0, 0.0]), 0.95).unwrap();
    assert_eq!((lo[0], hi[0], p[0]), (0.3, 0.3, 0.0));
    assert_eq!(p[1], 1.0);
    assert!(confidence_intervals(&DVector::zeros(1), &DVector::zeros(1), 1.0).is_err());
}

#[test]
fn bh_examples() {
    assert!(bh_fdr(&[0.5; 10], 0.05).unwrap().is_empty());
    assert_eq!(bh_fdr(&[0.001], 0.05).unwrap(), vec![0]);
    assert_eq!(bh_fdr(&[0.01, 0.02, 0.03, 0.20], 0.05).unwrap(), vec![0, 1, 2]);
    assert_eq!(bh_fdr(&[0.20, 0.03, 0.01, 0.02], 0.05).unwrap(), vec![1, 2, 3]);
    assert!(bh_fdr(&[1.2], 0.05).is_err());
    assert!(bh_fdr(&[0.2], 0.0).is_err());
}

/// Largest k with #{p_i <= k q / m} >= k; reject those p_i.
pub(crate) fn bh_brute_force(p: &[f64], q: f64) -> Vec<usize> {
    let m = p.len();
    for k in (1..=m).rev() {
        let t = k as f64 * q / m as f64;
        let hits: Vec<usize> = (0..m).filter(|&i| p[i] <= t).collect();
        if hits.len() >= k {
            return hits;
        }
    }
    Vec::new()
}

#[test]
fn bh_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let m = rng.gen_range(1..40);
        let p: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.3) { rng.gen::<f64>() * 0.01 } else { rng.gen() }).collect();
        assert_eq!(bh_fdr(&p, 0.05).unwrap(), bh_brute_force(&p, 0.05));
    }
}

proptest! {
    #[test]
    fn bh_is_monotone(p in prop::collection::vec(0.0f64..=1.0, 1..30), idx in 0usize..30, bump in 0.0f64..1.0) {
        let base = bh_fdr(&p, 0.1).unwrap();
        let mut larger = p.clone();
        let i = idx % p.len();
        larger[i] = (larger[i] + bump).min(1.0);
        let after = bh_fdr(&larger, 0.1).unwrap();
        prop_assert!(after.iter().all(|j| base.contains(j)));
    }

    #[test]
    fn wider_level_nests(e in prop::collection::vec(-5.0f64..5.0, 1..10), s in prop::collection::vec(0.0f64..3.0, 10)) {
        let e = DVector::from_vec(e);
        let se = DVector::from_fn(e.len(), |i, _| s[i]);
        let (l95, h95, p) = confidence_intervals(&e, &se, 0.95).unwrap();
        let (l99, h99, _) = confidence_intervals(&e, &se, 0.99).unwrap();
        for j in 0..e.len() {
            prop_assert!(l99[j] <= l95[j] && h95[j] <= h99[j]);
            prop_assert!(l95[j] <= e[j] && e[j] <= h95[j]);
            prop_assert!((0.0..=1.0).contains(&p[j]));
        }
    }
}

#[test]
fn single_network_multinet_agree() {
    let (m, x, d) = reference(80, 9);
    let policy = TuningPolicy { group_ratio: 0.0, ..TuningPolicy::benchmark(1.0) };
    let fit = fit_2slss(&d, &x, &m, &policy).unwrap();
    let multi = MultiNetwork::single(m.clone(), "m");
    let fit_m = fit_2slss_multinet(&d, &x, &multi, &policy).unwrap();
    let a = infer(&d, &x, &m, &fit, &InferenceOptions::default()).unwrap();
    let b = debias_multinet(&d, &x, &multi, &fit_m, &InferenceOptions::default()).unwrap();
    assert!((&a.e_hat - &b.e_hat).amax() <= 1e-8);
    let finite = |v: &DVector<f64>| v.map(|s| if s.is_finite() { s } else { 0.0 });
    assert!((finite(&a.se_eta) - finite(&b.se_eta)).amax() <= 1e-8);
    assert!((&a.p_values - &b.p_values).amax() <= 1e-8);
    assert_eq!(a.bh_rejections, b.bh_rejections);
}

#[test]
fn standard_errors_follow_relabelling() {
    let (m, x, d) = reference(50, 10);
    let perm: Vec<usize> = (0..50).map(|i| (i * 11 + 4) % 50).collect();
    let mp = m.permuted(&perm).unwrap();
    let mut xp = x.clone();
    let mut dp = d.clone();
    for i in 0..50 {
        xp.set_row(perm[i], &x.row(i));
        dp[perm[i]] = d[i];
    }
    let solver = SolverConfig { tolerance: 1e-12, ..SolverConfig::default() };
    let tuning = TuningPolicy { solver, ..TuningPolicy::benchmark(1.0) };
    let opts = InferenceOptions { solver, ..InferenceOptions::default() };
    let a = infer(&d, &x, &m, &fit_2slss(&d, &x, &m, &tuning).unwrap(), &opts).unwrap();
    let b = infer(&dp, &xp, &mp, &fit_2slss(&dp, &xp, &mp, &tuning).unwrap(), &opts).unwrap();
    for i in 0..50 {
        let (sa, sb) = (a.se_eta[i], b.se_eta[perm[i]]);
        assert!(sa == sb || (sa - sb).abs() < 1e-7 * sa.max(1.0), "{i}: {sa} {sb}");
    }
    assert!((a.se_beta[0] - b.se_beta[0]).abs() < 1e-7);
}
