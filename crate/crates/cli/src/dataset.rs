//! Datasets on disk: a TOML manifest pointing at CSV files keyed by external node ids.
//!
//! ```toml
//! outcomes = "outcomes.csv"      # id,outcome
//! covariates = "covariates.csv"  # id,<label>,...
//! binary_outcome = true
//!
//! [[networks]]
//! label = "kinship"
//! path = "kinship.csv"           # src,dst
//! ```
//!
//! Node order follows the outcomes file. A link listed by either endpoint is
//! a link in both directions.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use netlasso::network::{AdjacencyMatrix, MultiNetwork};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub outcomes: PathBuf,
    pub covariates: PathBuf,
    #[serde(default)]
    pub binary_outcome: bool,
    pub networks: Vec<NetworkEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkEntry {
    pub label: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d: DVector<f64>,
    pub x: DMatrix<f64>,
    pub covariate_labels: Vec<String>,
    pub networks: MultiNetwork,
    pub node_ids: Vec<String>,
    pub binary_outcome: bool,
    /// Non-fatal findings from loading, such as dropped duplicate links.
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn new(
        d: DVector<f64>,
        x: DMatrix<f64>,
        covariate_labels: Vec<String>,
        networks: MultiNetwork,
        node_ids: Vec<String>,
    ) -> Result<Self> {
        let n = d.len();
        if x.nrows() != n || networks.n() != n || node_ids.len() != n {
            return Err(CliError::Data(format!(
                "inconsistent sizes: {n} outcomes, {} covariate rows, {} network nodes, {} ids",
                x.nrows(),
                networks.n(),
                node_ids.len()
            )));
        }
        if covariate_labels.len() != x.ncols() {
            return Err(CliError::Data(format!("{} covariate labels for {} columns", covariate_labels.len(), x.ncols())));
        }
        let mut seen = BTreeSet::new();
        for id in &node_ids {
            if !seen.insert(id) {
                return Err(CliError::Data(format!("duplicate node id `{id}`")));
            }
        }
        Ok(Self { d, x, covariate_labels, networks, node_ids, binary_outcome: false, warnings: Vec::new() })
    }

    /// Dataset with ids `0..n` and covariates labelled `x1, x2, ...`.
    pub fn with_index_ids(d: DVector<f64>, x: DMatrix<f64>, networks: MultiNetwork) -> Result<Self> {
        let labels = (1..=x.ncols()).map(|c| format!("x{c}")).collect();
        let ids = (0..d.len()).map(|i| i.to_string()).collect();
        Self::new(d, x, labels, networks, ids)
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn id_map(&self) -> HashMap<&str, usize> {
        self.node_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }

    /// Indices of the given external ids.
    pub fn resolve(&self, ids: &[String]) -> Result<Vec<usize>> {
        let map = self.id_map();
        ids.iter().map(|id| map.get(id.as_str()).copied().ok_or_else(|| CliError::Data(format!("unknown node id `{id}`")))).collect()
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| CliError::io(path, e))
}

fn parse_f64(raw: &str, path: &Path, line: u64, what: &str) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| CliError::Data(format!("{}:{line}: {what} `{raw}` is not a number", path.display())))?;
    if !v.is_finite() {
        return Err(CliError::Data(format!("{}:{line}: {what} is not finite", path.display())));
    }
    Ok(v)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn read_outcomes(path: &Path, binary: bool) -> Result<(Vec<String>, Vec<f64>)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::io(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "id" || &headers[1] != "outcome" {
        return Err(CliError::Data(format!("{}: expected header `id,outcome`", path.display())));
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = line_of(&rec);
        let v = parse_f64(&rec[1], path, line, "outcome")?;
        if binary && v != 0.0 && v != 1.0 {
            return Err(CliError::Data(format!("{}:{line}: outcome {v} is not 0 or 1", path.display())));
        }
        ids.push(rec[0].to_string());
        values.push(v);
    }
    Ok((ids, values))
}

fn read_covariates(path: &Path, index: &HashMap<&str, usize>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::io(path, e))?.clone();
    if headers.is_empty() || &headers[0] != "id" {
        return Err(CliError::Data(format!("{}: first column must be `id`", path.display())));
    }
    let labels: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let n = index.len();
    let mut x = DMatrix::zeros(n, labels.len());
    let mut filled = vec![false; n];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = line_of(&rec);
        let row = *index
            .get(&rec[0])
            .ok_or_else(|| CliError::Data(format!("{}:{line}: id `{}` has no outcome", path.display(), &rec[0])))?;
        if std::mem::replace(&mut filled[row], true) {
            return Err(CliError::Data(format!("{}:{line}: id `{}` listed twice", path.display(), &rec[0])));
        }
        for (c, label) in labels.iter().enumerate() {
            x[(row, c)] = parse_f64(&rec[c + 1], path, line, label)?;
        }
    }
    if let Some(missing) = filled.iter().position(|f| !f) {
        let id = index.iter().find(|(_, &i)| i == missing).map(|(id, _)| *id).unwrap_or_default();
        return Err(CliError::Data(format!("{}: no covariates for id `{id}`", path.display())));
    }
    Ok((labels, x))
}

fn read_links(path: &Path, index: &HashMap<&str, usize>, label: &str, warnings: &mut Vec<String>) -> Result<AdjacencyMatrix> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::io(path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "src" || &headers[1] != "dst" {
        return Err(CliError::Data(format!("{}: expected header `src,dst`", path.display())));
    }
    let mut edges = BTreeSet::new();
    let (mut duplicates, mut loops) = (0, 0);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = line_of(&rec);
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| CliError::Data(format!("{}:{line}: unknown node id `{id}`", path.display())))
        };
        let (a, b) = (lookup(&rec[0])?, lookup(&rec[1])?);
        if a == b {
            loops += 1;
            continue;
        }
        if !edges.insert((a.min(b), a.max(b))) {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        warnings.push(format!("network `{label}`: dropped {duplicates} duplicate link(s)"));
    }
    if loops > 0 {
        warnings.push(format!("network `{label}`: dropped {loops} self-link(s)"));
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    Ok(AdjacencyMatrix::from_edges(index.len(), &edges)?)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Config { path: path.display().to_string(), message: e.to_string() })
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    if manifest.networks.is_empty() {
        return Err(CliError::Data("manifest lists no networks".into()));
    }
    let (ids, outcomes) = read_outcomes(&base.join(&manifest.outcomes), manifest.binary_outcome)?;
    let mut index = HashMap::new();
    for (i, id) in ids.iter().enumerate() {
        if index.insert(id.as_str(), i).is_some() {
            return Err(CliError::Data(format!("duplicate node id `{id}` in outcomes")));
        }
    }
    let (labels, x) = read_covariates(&base.join(&manifest.covariates), &index)?;
    let mut warnings = Vec::new();
    let mut networks = Vec::new();
    for entry in &manifest.networks {
        networks.push(read_links(&base.join(&entry.path), &index, &entry.label, &mut warnings)?);
    }
    let labels_net = manifest.networks.iter().map(|e| e.label.clone()).collect();
    let networks = MultiNetwork::new(networks, labels_net)?;
    let mut data = Dataset::new(DVector::from_vec(outcomes), x, labels, networks, ids)?;
    data.binary_outcome = manifest.binary_outcome;
    data.warnings = warnings;
    Ok(data)
}

/// Links as `src,dst` rows of external ids, each undirected link once.
pub fn write_links<W: std::io::Write>(m: &AdjacencyMatrix, ids: &[String], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(["src", "dst"]).map_err(err)?;
    for (i, j) in m.edges() {
        w.write_record([&ids[i], &ids[j]]).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}

/// Write the dataset as a manifest plus CSV files inside `dir`; returns the manifest path.
pub fn write_dataset(data: &Dataset, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let create = |name: &str| {
        let p = dir.join(name);
        std::fs::File::create(&p).map_err(|e| CliError::io(&p, e))
    };
    let err = |e: csv::Error| CliError::Data(e.to_string());

    let mut w = csv::Writer::from_writer(create("outcomes.csv")?);
    w.write_record(["id", "outcome"]).map_err(err)?;
    for (id, v) in data.node_ids.iter().zip(data.d.iter()) {
        w.write_record([id.clone(), v.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(dir.join("outcomes.csv"), e))?;

    let mut w = csv::Writer::from_writer(create("covariates.csv")?);
    let header: Vec<&str> = std::iter::once("id").chain(data.covariate_labels.iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(err)?;
    for (i, id) in data.node_ids.iter().enumerate() {
        let row: Vec<String> = std::iter::once(id.clone()).chain(data.x.row(i).iter().map(|v| v.to_string())).collect();
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(dir.join("covariates.csv"), e))?;

    let mut entries = Vec::new();
    for (j, (m, label)) in data.networks.networks().iter().zip(data.networks.labels()).enumerate() {
        let name = format!("network_{j}.csv");
        write_links(m, &data.node_ids, create(&name)?)?;
        entries.push(NetworkEntry { label: label.clone(), path: name.into() });
    }
    let manifest = Manifest {
        outcomes: "outcomes.csv".into(),
        covariates: "covariates.csv".into(),
        binary_outcome: data.binary_outcome,
        networks: entries,
    };
    let path = dir.join("manifest.toml");
    let text = toml::to_string(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}
