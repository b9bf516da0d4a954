use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use netlasso::dgp::{self, StructuralParams};
use netlasso::estimator::{self, FitResult};
use netlasso::inference::{self, InferenceResult};
use netlasso::montecarlo::{self, ModelKind};
use netlasso::network::{AdjacencyMatrix, MultiNetwork};
use serde::{Deserialize, Serialize};

use crate::config::{Config, EpsilonChoice};
use crate::counterfactual::{self, Counterfactual, EpsilonPolicy};
use crate::dataset::{self, Dataset};
use crate::error::{CliError, Result};

/// Where output goes when `--output` is absent; otherwise stdout.
pub const OUTPUT_DIR_ENV: &str = "NETLASSO_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "netlasso", version, about = "Key-player estimation and inference for network peer effects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random step of the command.
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file (a directory for `simulate --format csv`).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw random networks.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate outcomes on given networks.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Networks written by `generate`.
        #[arg(long)]
        networks: PathBuf,
    },
    /// Two-stage LASSO fit.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset manifest (`.toml`) or dataset JSON.
        #[arg(long)]
        data: PathBuf,
    },
    /// De-biased intervals and step-up rejections.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Reuse a JSON fit instead of refitting.
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Monte Carlo study from the `[study]` section.
    Mc {
        #[command(flatten)]
        common: Common,
    },
    /// Predicted outcomes when the chosen nodes are set to 1.
    Counterfactual {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Comma-separated ids; overrides `[counterfactual] leaders`.
        #[arg(long, value_delimiter = ',')]
        leaders: Option<Vec<String>>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Generate { common }
            | Self::Simulate { common, .. }
            | Self::Fit { common, .. }
            | Self::Infer { common, .. }
            | Self::Mc { common }
            | Self::Counterfactual { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Generate { .. } => "generate",
            Self::Simulate { .. } => "simulate",
            Self::Fit { .. } => "fit",
            Self::Infer { .. } => "infer",
            Self::Mc { .. } => "mc",
            Self::Counterfactual { .. } => "counterfactual",
        }
    }
}

const DEFAULT_SEED: u64 = 0;

/// Generated networks over nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworksFile {
    pub n: usize,
    pub labels: Vec<String>,
    pub edges: Vec<Vec<(usize, usize)>>,
}

impl NetworksFile {
    pub fn from_multi(multi: &MultiNetwork) -> Self {
        Self { n: multi.n(), labels: multi.labels().to_vec(), edges: multi.networks().iter().map(AdjacencyMatrix::edges).collect() }
    }

    pub fn to_multi(&self) -> Result<MultiNetwork> {
        let nets = self.edges.iter().map(|e| AdjacencyMatrix::from_edges(self.n, e)).collect::<netlasso::error::Result<Vec<_>>>()?;
        Ok(MultiNetwork::new(nets, self.labels.clone())?)
    }

    /// `network,src,dst` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Data(e.to_string());
        w.write_record(["network", "src", "dst"]).map_err(err)?;
        for (label, edges) in self.labels.iter().zip(&self.edges) {
            for (i, j) in edges {
                w.write_record([label.clone(), i.to_string(), j.to_string()]).map_err(err)?;
            }
        }
        into_string(w)
    }

    /// Read `network,src,dst` rows; `n` is not stored in the CSV form.
    pub fn from_csv(text: &str, n: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut labels: Vec<String> = Vec::new();
        let mut edges: Vec<Vec<(usize, usize)>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CliError::Data(e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let parse = |s: &str| s.parse::<usize>().map_err(|_| CliError::Data(format!("line {line}: `{s}` is not a node index")));
            let (i, j) = (parse(&rec[1])?, parse(&rec[2])?);
            if i >= n || j >= n {
                return Err(CliError::Data(format!("line {line}: node index out of range (n = {n})")));
            }
            let k = match labels.iter().position(|l| l == &rec[0]) {
                Some(k) => k,
                None => {
                    labels.push(rec[0].to_string());
                    edges.push(Vec::new());
                    labels.len() - 1
                }
            };
            edges[k].push((i.min(j), i.max(j)));
        }
        if labels.is_empty() {
            labels.push("network".into());
            edges.push(Vec::new());
        }
        Ok(Self { n, labels, edges })
    }
}

/// A dataset in one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetJson {
    pub node_ids: Vec<String>,
    pub outcome: Vec<f64>,
    pub covariate_labels: Vec<String>,
    /// Row-major, one row per node.
    pub covariates: Vec<Vec<f64>>,
    pub network_labels: Vec<String>,
    /// Links as pairs of external ids.
    pub networks: Vec<Vec<(String, String)>>,
    #[serde(default)]
    pub binary_outcome: bool,
}

impl DatasetJson {
    pub fn from_dataset(data: &Dataset) -> Self {
        let ids = &data.node_ids;
        Self {
            node_ids: ids.clone(),
            outcome: data.d.iter().copied().collect(),
            covariate_labels: data.covariate_labels.clone(),
            covariates: (0..data.n()).map(|i| data.x.row(i).iter().copied().collect()).collect(),
            network_labels: data.networks.labels().to_vec(),
            networks: data.networks.networks().iter().map(|m| m.edges().into_iter().map(|(i, j)| (ids[i].clone(), ids[j].clone())).collect()).collect(),
            binary_outcome: data.binary_outcome,
        }
    }

    pub fn into_dataset(self) -> Result<Dataset> {
        let n = self.node_ids.len();
        let k = self.covariate_labels.len();
        if self.covariates.len() != n || self.covariates.iter().any(|r| r.len() != k) {
            return Err(CliError::Data(format!("covariates must be {n} rows of {k} values")));
        }
        let x = DMatrix::from_fn(n, k, |i, c| self.covariates[i][c]);
        let placeholder = MultiNetwork::single(AdjacencyMatrix::empty(n), "placeholder");
        let mut data = Dataset::new(DVector::from_vec(self.outcome), x, self.covariate_labels, placeholder, self.node_ids)?;
        let index = data.id_map();
        let mut nets = Vec::new();
        for links in &self.networks {
            let mut edges = Vec::new();
            for (a, b) in links {
                let ia = *index.get(a.as_str()).ok_or_else(|| CliError::Data(format!("unknown node id `{a}`")))?;
                let ib = *index.get(b.as_str()).ok_or_else(|| CliError::Data(format!("unknown node id `{b}`")))?;
                if ia != ib {
                    edges.push((ia.min(ib), ia.max(ib)));
                }
            }
            edges.sort_unstable();
            edges.dedup();
            nets.push(AdjacencyMatrix::from_edges(n, &edges)?);
        }
        data.networks = MultiNetwork::new(nets, self.network_labels)?;
        data.binary_outcome = self.binary_outcome;
        Ok(data)
    }
}

/// Fit plus the labels needed to read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub model: ModelKind,
    pub node_ids: Vec<String>,
    pub covariate_labels: Vec<String>,
    pub network_labels: Vec<String>,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferOutput {
    pub model: ModelKind,
    pub node_ids: Vec<String>,
    pub covariate_labels: Vec<String>,
    pub network_labels: Vec<String>,
    pub inference: InferenceResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualOutput {
    pub leaders: Vec<String>,
    pub node_ids: Vec<String>,
    pub predicted: Vec<f64>,
    pub mean_outcome: f64,
    /// Only for 0/1 outcomes.
    pub participation_rate: Option<f64>,
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Data(e.to_string()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Dataset from a TOML manifest or a dataset JSON.
pub fn load_data(path: &Path) -> Result<Dataset> {
    if is_json(path) {
        read_json::<DatasetJson>(path)?.into_dataset()
    } else {
        dataset::load_dataset(path)
    }
}

fn load_config(common: &Common) -> Result<Config> {
    match &common.config {
        Some(path) => Config::load(path),
        None => Ok(Config::default()),
    }
}

fn output_target(command: &Command) -> Option<PathBuf> {
    let common = command.common();
    if let Some(p) = &common.output {
        return Some(p.clone());
    }
    let dir = std::env::var_os(OUTPUT_DIR_ENV)?;
    let name = match (command, common.format) {
        (Command::Simulate { .. }, Format::Csv) => "simulate".to_string(),
        _ => format!("{}.{}", command.name(), common.format.extension()),
    };
    Some(PathBuf::from(dir).join(name))
}

fn emit(target: Option<&Path>, text: &str) -> Result<()> {
    match target {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            std::fs::write(path, text).map_err(|e| CliError::io(path, e))
        }
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn warn_all(data: &Dataset) {
    for w in &data.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn generate(config: &Config, seed: u64) -> Result<NetworksFile> {
    let g = &config.generate;
    if g.networks == 0 {
        return Err(CliError::Config { path: "[generate]".into(), message: "networks must be at least 1".into() });
    }
    let mut nets = Vec::with_capacity(g.networks);
    for j in 0..g.networks {
        let m = g.generator.generate(g.n, montecarlo::substream(seed, j as u64))?;
        // the leader block goes in the first network only
        nets.push(if j == 0 { montecarlo::place_leader_block(&m, &g.leaders, g.leader_block)? } else { m });
    }
    let labels = (0..g.networks).map(|j| format!("network{j}")).collect();
    Ok(NetworksFile::from_multi(&MultiNetwork::new(nets, labels)?))
}

pub fn simulate(config: &Config, networks: &MultiNetwork, seed: u64) -> Result<Dataset> {
    let s = &config.simulate;
    let n = networks.n();
    if s.effects.len() > networks.q() {
        return Err(CliError::Data(format!("{} effect lists for {} network(s)", s.effects.len(), networks.q())));
    }
    let mut etas = Vec::with_capacity(networks.q());
    for j in 0..networks.q() {
        let mut eta = DVector::zeros(n);
        if let Some(values) = s.effects.get(j) {
            if values.len() != s.leaders.len() {
                return Err(CliError::Data(format!("network {j}: {} effects for {} leaders", values.len(), s.leaders.len())));
            }
            for (&l, &v) in s.leaders.iter().zip(values) {
                if l >= n {
                    return Err(CliError::Data(format!("leader {l} out of range (n = {n})")));
                }
                eta[l] = v;
            }
        }
        etas.push(eta);
    }
    let beta = DVector::from_vec(s.beta0.clone());
    let x = dgp::draw_design(n, beta.len(), montecarlo::substream(seed, 1))?;
    let err_seed = montecarlo::substream(seed, 2);
    let draw = match config.model.kind {
        ModelKind::Base | ModelKind::Cliques => {
            if networks.q() != 1 {
                return Err(CliError::Data(format!("the {:?} model takes one network, got {}", config.model.kind, networks.q())));
            }
            let mut params = StructuralParams::new(etas[0].clone(), beta, s.sigma).with_error_law(s.error_law);
            let m = &networks.networks()[0];
            if config.model.kind == ModelKind::Cliques {
                params = params.with_gamma(s.gamma0);
                dgp::simulate_cliques(m, &params, &x, err_seed)?
            } else {
                dgp::simulate_base(m, &params, &x, err_seed)?
            }
        }
        ModelKind::Multinet => {
            let params = StructuralParams::multi(etas, beta, s.sigma).with_error_law(s.error_law);
            dgp::simulate_multinet(networks, &params, &x, err_seed)?
        }
    };
    Dataset::with_index_ids(draw.outcome, x, networks.clone())
}

fn single_network(data: &Dataset, kind: ModelKind) -> Result<&AdjacencyMatrix> {
    if data.networks.q() != 1 {
        return Err(CliError::Data(format!("the {kind:?} model takes one network, the data has {}", data.networks.q())));
    }
    Ok(&data.networks.networks()[0])
}

pub fn fit(config: &Config, data: &Dataset, seed: Option<u64>) -> Result<FitResult> {
    let mut tuning = config.tuning.clone();
    if let Some(s) = seed {
        tuning.cv_seed = s;
    }
    let kind = config.model.kind;
    Ok(match kind {
        ModelKind::Base => estimator::fit_2slss(&data.d, &data.x, single_network(data, kind)?, &tuning)?,
        ModelKind::Cliques => estimator::fit_2slss_cliques(&data.d, &data.x, single_network(data, kind)?, config.model.k_powers, &tuning)?,
        ModelKind::Multinet => estimator::fit_2slss_multinet(&data.d, &data.x, &data.networks, &tuning)?,
    })
}

pub fn infer(config: &Config, data: &Dataset, fit: &FitResult) -> Result<InferenceResult> {
    let kind = config.model.kind;
    let opts = &config.inference;
    Ok(match kind {
        ModelKind::Base => inference::infer(&data.d, &data.x, single_network(data, kind)?, fit, opts)?,
        ModelKind::Cliques => inference::infer_cliques(&data.d, &data.x, single_network(data, kind)?, fit, opts)?,
        ModelKind::Multinet => inference::debias_multinet(&data.d, &data.x, &data.networks, fit, opts)?,
    })
}

fn load_or_fit(config: &Config, data: &Dataset, fit_path: Option<&Path>, seed: Option<u64>) -> Result<FitResult> {
    match fit_path {
        Some(p) => {
            let out: FitOutput = read_json(p)?;
            if out.node_ids != data.node_ids {
                return Err(CliError::Data(format!("{}: node ids differ from the data", p.display())));
            }
            if out.model != config.model.kind {
                return Err(CliError::Data(format!("{}: fit is for the {:?} model, config says {:?}", p.display(), out.model, config.model.kind)));
            }
            Ok(out.fit)
        }
        None => fit(config, data, seed),
    }
}

pub fn counterfactual(config: &Config, data: &Dataset, fit: &FitResult, leaders: &[String], seed: u64) -> Result<CounterfactualOutput> {
    let idx = data.resolve(leaders)?;
    let policy = match config.counterfactual.epsilon {
        EpsilonChoice::Zero => EpsilonPolicy::Zero,
        EpsilonChoice::Resample => EpsilonPolicy::Resample {
            residuals: counterfactual::structural_residuals(&data.d, &data.x, &data.networks, fit)?,
            seed,
            draws: config.counterfactual.draws,
        },
    };
    let cf: Counterfactual = counterfactual::counterfactual_participation(fit, &data.networks, &data.x, &idx, &policy)?;
    Ok(CounterfactualOutput {
        leaders: leaders.to_vec(),
        node_ids: cf.followers.iter().map(|&i| data.node_ids[i].clone()).collect(),
        predicted: cf.predicted,
        mean_outcome: cf.mean_outcome,
        participation_rate: data.binary_outcome.then_some(cf.participation_rate),
    })
}

fn term_rows(out: &FitOutput) -> Vec<(String, String, String, f64)> {
    let fit = &out.fit;
    let n = fit.n();
    let mut rows = Vec::new();
    for (j, label) in out.network_labels.iter().enumerate() {
        for i in 0..n {
            rows.push(("eta".to_string(), label.clone(), out.node_ids[i].clone(), fit.eta_hat[j * n + i]));
        }
    }
    for (c, label) in out.covariate_labels.iter().enumerate() {
        rows.push(("beta".to_string(), String::new(), label.clone(), fit.beta_hat[c]));
    }
    if let Some(g) = fit.gamma_hat {
        rows.push(("gamma".to_string(), String::new(), String::new(), g));
    }
    rows
}

pub fn fit_csv(out: &FitOutput) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(["term", "network", "id", "estimate"]).map_err(err)?;
    for (term, net, id, v) in term_rows(out) {
        w.write_record([term, net, id, v.to_string()]).map_err(err)?;
    }
    into_string(w)
}

/// One row per node effect, then one per covariate, then `gamma` if present.
pub fn infer_csv(out: &InferOutput) -> Result<String> {
    let r = &out.inference;
    let n = r.n();
    let rejected: std::collections::BTreeSet<usize> = r.bh_rejections.iter().copied().collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(["term", "network", "id", "estimate", "se", "ci_lower", "ci_upper", "p_value", "rejected"]).map_err(err)?;
    for (j, label) in out.network_labels.iter().enumerate() {
        for i in 0..n {
            let s = j * n + i;
            w.write_record([
                "eta".to_string(),
                label.clone(),
                out.node_ids[i].clone(),
                r.e_hat[s].to_string(),
                r.se_eta[s].to_string(),
                r.ci_lower[s].to_string(),
                r.ci_upper[s].to_string(),
                r.p_values[s].to_string(),
                rejected.contains(&s).to_string(),
            ])
            .map_err(err)?;
        }
    }
    for (c, label) in out.covariate_labels.iter().enumerate() {
        w.write_record([
            "beta".to_string(),
            String::new(),
            label.clone(),
            r.b_hat[c].to_string(),
            r.se_beta[c].to_string(),
            r.beta_ci_lower[c].to_string(),
            r.beta_ci_upper[c].to_string(),
            r.beta_p_values[c].to_string(),
            String::new(),
        ])
        .map_err(err)?;
    }
    if let Some(g) = &r.gamma {
        w.write_record([
            "gamma".to_string(),
            String::new(),
            String::new(),
            g.estimate.to_string(),
            g.se.to_string(),
            g.ci_lower.to_string(),
            g.ci_upper.to_string(),
            g.p_value.to_string(),
            String::new(),
        ])
        .map_err(err)?;
    }
    into_string(w)
}

pub fn counterfactual_csv(out: &CounterfactualOutput) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(["id", "predicted", "clipped"]).map_err(err)?;
    for (id, v) in out.node_ids.iter().zip(&out.predicted) {
        w.write_record([id.clone(), v.to_string(), v.clamp(0.0, 1.0).to_string()]).map_err(err)?;
    }
    into_string(w)
}

pub fn run(cli: Cli) -> Result<()> {
    let target = output_target(&cli.command);
    let target = target.as_deref();
    let common = cli.command.common().clone();
    let config = load_config(&common)?;
    let seed = common.seed;
    let text = match &cli.command {
        Command::Generate { .. } => {
            let nets = generate(&config, seed.unwrap_or(DEFAULT_SEED))?;
            match common.format {
                Format::Csv => nets.to_csv()?,
                Format::Json => to_json(&nets)?,
            }
        }
        Command::Simulate { networks, .. } => {
            let nets = if is_json(networks) {
                read_json::<NetworksFile>(networks)?
            } else {
                NetworksFile::from_csv(&read_text(networks)?, config.generate.n)?
            };
            let data = simulate(&config, &nets.to_multi()?, seed.unwrap_or(DEFAULT_SEED))?;
            match common.format {
                Format::Csv => {
                    let dir = target.ok_or_else(|| CliError::Usage("simulate --format csv needs --output <dir>".into()))?;
                    let manifest = dataset::write_dataset(&data, dir)?;
                    eprintln!("wrote {}", manifest.display());
                    return Ok(());
                }
                Format::Json => to_json(&DatasetJson::from_dataset(&data))?,
            }
        }
        Command::Fit { data, .. } => {
            let data = load_data(data)?;
            warn_all(&data);
            let out = FitOutput {
                model: config.model.kind,
                node_ids: data.node_ids.clone(),
                covariate_labels: data.covariate_labels.clone(),
                network_labels: data.networks.labels().to_vec(),
                fit: fit(&config, &data, seed)?,
            };
            for w in &out.fit.diagnostics.warnings {
                eprintln!("warning: {w}");
            }
            match common.format {
                Format::Csv => fit_csv(&out)?,
                Format::Json => to_json(&out)?,
            }
        }
        Command::Infer { data, fit: fit_path, .. } => {
            let data = load_data(data)?;
            warn_all(&data);
            let f = load_or_fit(&config, &data, fit_path.as_deref(), seed)?;
            let out = InferOutput {
                model: config.model.kind,
                node_ids: data.node_ids.clone(),
                covariate_labels: data.covariate_labels.clone(),
                network_labels: data.networks.labels().to_vec(),
                inference: infer(&config, &data, &f)?,
            };
            match common.format {
                Format::Csv => infer_csv(&out)?,
                Format::Json => to_json(&out)?,
            }
        }
        Command::Mc { .. } => {
            let mut study = config.study.clone();
            if let Some(s) = seed {
                study.master_seed = s;
            }
            let report = montecarlo::run_study(&study)?;
            for f in &report.replication_failures {
                eprintln!("warning: replication {} failed: {}", f.r, f.reason);
            }
            match common.format {
                Format::Csv => montecarlo::report_to_csv(&report)?,
                Format::Json => {
                    let mut s = montecarlo::report_to_json(&report)?;
                    s.push('\n');
                    s
                }
            }
        }
        Command::Counterfactual { data, fit: fit_path, leaders, .. } => {
            let data = load_data(data)?;
            warn_all(&data);
            let f = load_or_fit(&config, &data, fit_path.as_deref(), seed)?;
            let leaders = leaders.clone().unwrap_or_else(|| config.counterfactual.leaders.clone());
            let out = counterfactual(&config, &data, &f, &leaders, seed.unwrap_or(DEFAULT_SEED))?;
            match out.participation_rate {
                Some(r) => eprintln!("participation rate {r:.4} over {} nodes", out.node_ids.len()),
                None => eprintln!("mean predicted outcome {:.4} over {} nodes", out.mean_outcome, out.node_ids.len()),
            }
            match common.format {
                Format::Csv => counterfactual_csv(&out)?,
                Format::Json => to_json(&out)?,
            }
        }
    };
    emit(target, &text)
}
