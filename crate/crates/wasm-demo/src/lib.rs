//! Browser demo. A [`Session`] simulates one network with a few key players,
//! estimates node effects, tests them, and predicts what happens when chosen
//! nodes are switched on. [`Demo`] wraps it for JavaScript and speaks JSON.

use nalgebra::DVector;
use netlasso::dgp::{self, StructuralParams};
use netlasso::estimator::{self, FitResult, TuningPolicy};
use netlasso::inference::{self, InferenceOptions};
use netlasso::montecarlo::{self, LeaderBlock};
use netlasso::network::{self, AdjacencyMatrix, MultiNetwork};
use netlasso_cli::counterfactual::{counterfactual_participation, EpsilonPolicy};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const BETA: f64 = 3.0;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Scene {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    /// Nodes with a nonzero true effect.
    pub leaders: Vec<usize>,
    pub effect: f64,
    pub outcome: Vec<f64>,
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Estimate {
    pub eta_hat: Vec<f64>,
    pub selected: Vec<usize>,
    pub e_hat: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Nodes kept by the step-up rule.
    pub rejected: Vec<usize>,
    pub beta_hat: f64,
    pub b_hat: f64,
    pub beta_ci: (f64, f64),
    /// True leaders among `rejected`, and the rest.
    pub hits: usize,
    pub false_hits: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WhatIf {
    pub forced: Vec<usize>,
    pub followers: Vec<usize>,
    pub predicted: Vec<f64>,
    pub mean_outcome: f64,
    /// Same prediction with nobody forced.
    pub baseline_mean: f64,
}

#[derive(Debug, Clone)]
pub struct Session {
    network: AdjacencyMatrix,
    x: nalgebra::DMatrix<f64>,
    d: DVector<f64>,
    scene: Scene,
    fit: Option<FitResult>,
}

impl Session {
    /// Erdős–Rényi network on `n` nodes; the first `leaders` nodes form a path and carry effect `effect`.
    pub fn simulate(n: usize, p: f64, leaders: usize, effect: f64, seed: u64) -> Result<Self, String> {
        if leaders > n {
            return Err(format!("{leaders} leaders for {n} nodes"));
        }
        let run = || -> netlasso::error::Result<Self> {
            let base = network::erdos_renyi(n, p, montecarlo::substream(seed, 0))?;
            let ids: Vec<usize> = (0..leaders).collect();
            let m = montecarlo::place_leader_block(&base, &ids, LeaderBlock::Chain)?;
            let x = dgp::draw_design(n, 1, montecarlo::substream(seed, 1))?;
            let params = StructuralParams::new(StructuralParams::leader_effects(n, leaders, effect), DVector::from_element(1, BETA), 1.0);
            let draw = dgp::simulate_base(&m, &params, &x, montecarlo::substream(seed, 2))?;
            let scene = Scene {
                n,
                edges: m.edges(),
                leaders: ids,
                effect,
                outcome: draw.outcome.iter().copied().collect(),
                spectral_radius: draw.spectral_radius,
            };
            Ok(Self { network: m, x, d: draw.outcome, scene, fit: None })
        };
        run().map_err(|e| e.to_string())
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    /// Benchmark-tuned fit with constant `c`, then intervals at `level` and step-up testing at `fdr_q`.
    pub fn estimate(&mut self, c: f64, level: f64, fdr_q: f64) -> Result<Estimate, String> {
        let tuning = TuningPolicy::benchmark(c);
        let fit = estimator::fit_2slss(&self.d, &self.x, &self.network, &tuning).map_err(|e| e.to_string())?;
        let options = InferenceOptions { level, fdr_q, ..InferenceOptions::default() };
        let inf = inference::infer(&self.d, &self.x, &self.network, &fit, &options).map_err(|e| e.to_string())?;
        let rejected = inf.bh_rejections.clone();
        let hits = rejected.iter().filter(|i| self.scene.leaders.contains(i)).count();
        let est = Estimate {
            eta_hat: fit.eta_hat.iter().copied().collect(),
            selected: fit.selected_set.clone(),
            e_hat: inf.e_hat.iter().copied().collect(),
            ci_lower: inf.ci_lower.iter().copied().collect(),
            ci_upper: inf.ci_upper.iter().copied().collect(),
            p_values: inf.p_values.iter().copied().collect(),
            false_hits: rejected.len() - hits,
            hits,
            rejected,
            beta_hat: fit.beta_hat[0],
            b_hat: inf.b_hat[0],
            beta_ci: (inf.beta_ci_lower[0], inf.beta_ci_upper[0]),
        };
        self.fit = Some(fit);
        Ok(est)
    }

    /// Predicted outcomes of everyone else when `forced` are set to 1, under the last fit.
    pub fn what_if(&self, forced: &[usize]) -> Result<WhatIf, String> {
        let fit = self.fit.as_ref().ok_or("estimate first")?;
        let nets = MultiNetwork::single(self.network.clone(), "network");
        let cf = counterfactual_participation(fit, &nets, &self.x, forced, &EpsilonPolicy::Zero).map_err(|e| e.to_string())?;
        let base = counterfactual_participation(fit, &nets, &self.x, &[], &EpsilonPolicy::Zero).map_err(|e| e.to_string())?;
        Ok(WhatIf {
            forced: forced.to_vec(),
            followers: cf.followers,
            predicted: cf.predicted,
            mean_outcome: cf.mean_outcome,
            baseline_mean: base.mean_outcome,
        })
    }
}

fn json<T: Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, p: f64, leaders: usize, effect: f64, seed: u32) -> Result<Demo, JsError> {
        let session = Session::simulate(n, p, leaders, effect, seed as u64).map_err(|e| JsError::new(&e))?;
        Ok(Demo { session })
    }

    /// Network, true leaders and outcomes as JSON.
    pub fn scene(&self) -> Result<String, JsError> {
        json(self.session.scene())
    }

    pub fn estimate(&mut self, c: f64, level: f64, fdr_q: f64) -> Result<String, JsError> {
        let est = self.session.estimate(c, level, fdr_q).map_err(|e| JsError::new(&e))?;
        json(&est)
    }

    #[wasm_bindgen(js_name = whatIf)]
    pub fn what_if(&self, forced: Vec<u32>) -> Result<String, JsError> {
        let forced: Vec<usize> = forced.into_iter().map(|i| i as usize).collect();
        let w = self.session.what_if(&forced).map_err(|e| JsError::new(&e))?;
        json(&w)
    }
}
