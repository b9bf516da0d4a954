use nalgebra::DVector;
use netlasso::dgp::{self, StructuralParams};
use netlasso::estimator::{self, TuningPolicy};
use netlasso::inference::{self, InferenceOptions};
use netlasso::network;

fn main() -> netlasso::error::Result<()> {
    let n = 200;
    // five key players linked in a path inside a random network
    let m = network::embed_leader_block(&network::erdos_renyi(n, 0.1, 1)?, &network::chain_block(5))?;
    let x = dgp::draw_design(n, 1, 2)?;
    let params = StructuralParams::new(StructuralParams::leader_effects(n, 5, 0.5), DVector::from_element(1, 3.0), 1.0);
    let d = dgp::simulate_base(&m, &params, &x, 3)?.outcome;

    let fit = estimator::fit_2slss(&d, &x, &m, &TuningPolicy::default())?;
    let res = inference::infer(&d, &x, &m, &fit, &InferenceOptions::default())?;

    println!("selected by the lasso: {:?}", fit.selected_set);
    println!("significant at FDR 5%: {:?}", res.bh_rejections);
    for &i in &res.bh_rejections {
        println!("  node {i}: {:.3} [{:.3}, {:.3}]", res.e_hat[i], res.ci_lower[i], res.ci_upper[i]);
    }
    println!("beta: {:.3} (se {:.3})", res.b_hat[0], res.se_beta[0]);
    Ok(())
}
