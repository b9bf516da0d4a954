use nalgebra::{DMatrix, DVector};
use netlasso::estimator::{FitResult, Lambdas, StageDiagnostics};
use netlasso::network::{erdos_renyi, AdjacencyMatrix, MultiNetwork};
use netlasso_cli::counterfactual::{counterfactual_participation, spillover_matrix, EpsilonPolicy};
use proptest::prelude::*;

fn fit_with(eta: DVector<f64>, beta: DVector<f64>, gamma: Option<f64>) -> FitResult {
    let n = eta.len();
    FitResult {
        selected_set: (0..n).filter(|&i| eta[i] != 0.0).collect(),
        beta_hat: beta,
        eta_hat: eta,
        gamma_hat: gamma,
        d_hat: DVector::zeros(n),
        lambdas: Lambdas::default(),
        diagnostics: StageDiagnostics::default(),
        n_networks: 1,
    }
}

fn chain(n: usize) -> MultiNetwork {
    let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
    MultiNetwork::single(AdjacencyMatrix::from_edges(n, &edges).unwrap(), "chain")
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[test]
fn zero_effects_leave_followers_at_x_beta() {
    let nets = chain(5);
    let x = DMatrix::from_fn(5, 2, |i, c| (i + 2 * c) as f64 * 0.1);
    let beta = DVector::from_vec(vec![0.4, -0.2]);
    let cf = counterfactual_participation(&fit_with(DVector::zeros(5), beta.clone(), None), &nets, &x, &[1, 3], &EpsilonPolicy::Zero).unwrap();
    let xb = &x * &beta;
    assert_eq!(cf.followers, vec![0, 2, 4]);
    for (k, &i) in cf.followers.iter().enumerate() {
        assert!((cf.predicted[k] - xb[i]).abs() < 1e-15);
    }
}

#[test]
fn no_leaders_gives_the_reduced_form() {
    let nets = chain(6);
    let eta = DVector::from_vec(vec![0.3, 0.0, 0.2, 0.1, 0.0, 0.25]);
    let x = DMatrix::from_fn(6, 1, |i, _| 0.1 * i as f64);
    let beta = DVector::from_element(1, 1.5);
    let fit = fit_with(eta.clone(), beta.clone(), None);
    let cf = counterfactual_participation(&fit, &nets, &x, &[], &EpsilonPolicy::Zero).unwrap();
    let a = nets.networks()[0].col_scale(&eta).unwrap();
    let d = (DMatrix::identity(6, 6) - a).lu().solve(&(&x * &beta)).unwrap();
    assert_eq!(cf.followers.len(), 6);
    for i in 0..6 {
        assert!((cf.predicted[i] - d[i]).abs() < 1e-12);
    }
}

#[test]
fn four_node_chain_matches_cramer() {
    // 0 - 1 - 2 - 3 with node 0 forced to 1
    let nets = chain(4);
    let eta = [0.4, 0.3, 0.2, 0.1];
    let x = DMatrix::from_column_slice(4, 1, &[0.5, -1.0, 2.0, 0.25]);
    let b = 0.8;
    let fit = fit_with(DVector::from_row_slice(&eta), DVector::from_element(1, b), None);
    let cf = counterfactual_participation(&fit, &nets, &x, &[0], &EpsilonPolicy::Zero).unwrap();

    // rows 1..3 of (I - M∘η) D = X b with D_0 = 1; A_ij = M_ij η_j
    let sys = [[1.0, -eta[2], 0.0], [-eta[1], 1.0, -eta[3]], [0.0, -eta[2], 1.0]];
    let rhs = [eta[0] + x[1] * b, x[2] * b, x[3] * b];
    let det = det3(sys);
    for col in 0..3 {
        let mut m = sys;
        for r in 0..3 {
            m[r][col] = rhs[r];
        }
        assert!((cf.predicted[col] - det3(m) / det).abs() < 1e-13, "node {}", col + 1);
    }
    let mean = cf.predicted.iter().sum::<f64>() / 3.0;
    assert!((cf.mean_outcome - mean).abs() < 1e-15);
    let rate = cf.predicted.iter().map(|v| v.clamp(0.0, 1.0)).sum::<f64>() / 3.0;
    assert!((cf.participation_rate - rate).abs() < 1e-15);
}

#[test]
fn homogeneous_effect_enters_the_spillover_matrix() {
    let nets = chain(3);
    let fit = fit_with(DVector::from_vec(vec![0.2, 0.0, 0.0]), DVector::zeros(1), Some(0.1));
    let a = spillover_matrix(&fit, &nets).unwrap();
    let m = nets.networks()[0].matrix();
    assert!((a[(1, 0)] - 0.3).abs() < 1e-15);
    assert!((a[(0, 1)] - 0.1).abs() < 1e-15);
    assert_eq!(a[(0, 0)], 0.0);
    assert!((a.sum() - (0.2 + 0.1 * m.sum())).abs() < 1e-15);
}

#[test]
fn resampling_zero_residuals_matches_zero_policy() {
    let nets = chain(5);
    let fit = fit_with(DVector::from_vec(vec![0.3, 0.3, 0.0, 0.0, 0.2]), DVector::from_element(1, 0.5), None);
    let x = DMatrix::from_element(5, 1, 0.4);
    let zero = counterfactual_participation(&fit, &nets, &x, &[2], &EpsilonPolicy::Zero).unwrap();
    let policy = EpsilonPolicy::Resample { residuals: DVector::from_element(5, 3.0), seed: 9, draws: 7 };
    let resampled = counterfactual_participation(&fit, &nets, &x, &[2], &policy).unwrap();
    for (a, b) in zero.predicted.iter().zip(&resampled.predicted) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn resampling_is_seeded() {
    let nets = chain(5);
    let fit = fit_with(DVector::from_vec(vec![0.3, 0.3, 0.0, 0.0, 0.2]), DVector::from_element(1, 0.5), None);
    let x = DMatrix::from_element(5, 1, 0.4);
    let residuals = DVector::from_vec(vec![0.5, -1.0, 0.2, 0.9, -0.6]);
    let run = |seed| {
        let policy = EpsilonPolicy::Resample { residuals: residuals.clone(), seed, draws: 25 };
        counterfactual_participation(&fit, &nets, &x, &[0], &policy).unwrap()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1).predicted, run(2).predicted);
}

#[test]
fn invalid_requests_fail() {
    let nets = chain(3);
    let x = DMatrix::zeros(3, 1);
    // 1 - η on the follower block is singular
    let singular = fit_with(DVector::from_vec(vec![0.0, 1.0, 1.0]), DVector::zeros(1), None);
    assert!(counterfactual_participation(&singular, &nets, &x, &[0], &EpsilonPolicy::Zero).is_err());
    let ok = fit_with(DVector::zeros(3), DVector::zeros(1), None);
    assert!(counterfactual_participation(&ok, &nets, &x, &[3], &EpsilonPolicy::Zero).is_err());
    assert!(counterfactual_participation(&ok, &nets, &x, &[1, 1], &EpsilonPolicy::Zero).is_err());
    assert!(counterfactual_participation(&ok, &nets, &DMatrix::zeros(3, 2), &[], &EpsilonPolicy::Zero).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adding_leaders_never_lowers_predictions(seed in 0u64..10_000, n in 6usize..30, scale in 0.0f64..0.9) {
        let m = erdos_renyi(n, 0.2, seed).unwrap();
        // column sums of M∘η stay below `scale`, so the spectral radius does too
        let eta = DVector::from_fn(n, |j, _| {
            let deg = m.degree(j).max(1) as f64;
            scale * ((j * 31 + seed as usize) % 7) as f64 / 7.0 / deg
        });
        let nets = MultiNetwork::single(m, "m");
        let x = DMatrix::from_fn(n, 1, |i, _| ((i as f64) * 1.3).cos());
        let fit = fit_with(eta, DVector::from_element(1, 0.7), None);
        let small: Vec<usize> = vec![0];
        let large: Vec<usize> = vec![0, 1, 2];
        let a = counterfactual_participation(&fit, &nets, &x, &small, &EpsilonPolicy::Zero).unwrap();
        let b = counterfactual_participation(&fit, &nets, &x, &large, &EpsilonPolicy::Zero).unwrap();
        for (k, &i) in b.followers.iter().enumerate() {
            let before = a.predicted[a.followers.iter().position(|&f| f == i).unwrap()];
            prop_assert!(b.predicted[k] >= before - 1e-12, "node {i}: {before} -> {}", b.predicted[k]);
        }
    }
}
