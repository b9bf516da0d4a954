//! Adjacency matrices, random graph generators, the column-scaling operator
//! and identification diagnostics.

use std::collections::{BTreeSet, VecDeque};
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Projector, RANK_RTOL};

/// Binary connection structure with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    entries: DMatrix<f64>,
    symmetric: bool,
}

impl AdjacencyMatrix {
    /// Validates the {0,1} entries, zero diagonal and (if flagged) symmetry.
    pub fn from_dense(entries: DMatrix<f64>, symmetric: bool) -> Result<Self> {
        let (r, c) = entries.shape();
        if r != c {
            return Err(Error::Dimension(format!("adjacency must be square, got {r}x{c}")));
        }
        for i in 0..r {
            if entries[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!("nonzero diagonal entry at node {i}")));
            }
            for j in 0..r {
                let v = entries[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidArgument(format!("entry ({i},{j}) = {v} is not binary")));
                }
                if symmetric && v != entries[(j, i)] {
                    return Err(Error::InvalidArgument(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        Ok(Self { entries, symmetric })
    }

    pub fn empty(n: usize) -> Self {
        Self { entries: DMatrix::zeros(n, n), symmetric: true }
    }

    /// Undirected graph from an edge list; duplicates collapse, self-loops are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n);
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!("edge ({a},{b}) references a node >= {n}")));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at node {a}")));
            }
            m[(a, b)] = 1.0;
            m[(b, a)] = 1.0;
        }
        Ok(Self { entries: m, symmetric: true })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.entries[(i, j)] != 0.0
    }

    /// Number of nodes listing `j` as a neighbour (column sum).
    pub fn degree(&self, j: usize) -> usize {
        self.entries.column(j).iter().filter(|&&v| v != 0.0).count()
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.has_edge(i, j)).collect()
    }

    /// Undirected edges `(i, j)`, `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.has_edge(i, j) || self.has_edge(j, i) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// Nodes whose column is identically zero.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.degree(j) == 0).collect()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if !seen[j] && (self.has_edge(i, j) || self.has_edge(j, i)) {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == n
    }

    /// Relabel nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        check_permutation(perm, n)?;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(perm[i], perm[j])] = self.entries[(i, j)];
            }
        }
        Ok(Self { entries: m, symmetric: self.symmetric })
    }

    /// `M ∘ v`, i.e. `M diag(v)`.
    pub fn col_scale(&self, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        col_scale(&self.entries, v)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::Dimension(format!("permutation of length {} for {n} nodes", perm.len())));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Several networks over one node set.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiNetwork {
    networks: Vec<AdjacencyMatrix>,
    labels: Vec<String>,
}

impl MultiNetwork {
    pub fn new(networks: Vec<AdjacencyMatrix>, labels: Vec<String>) -> Result<Self> {
        if networks.is_empty() {
            return Err(Error::InvalidArgument("at least one network is required".into()));
        }
        if networks.len() != labels.len() {
            return Err(Error::Dimension(format!("{} networks but {} labels", networks.len(), labels.len())));
        }
        let n = networks[0].n();
        if networks.iter().any(|m| m.n() != n) {
            return Err(Error::Dimension("networks differ in node count".into()));
        }
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::InvalidArgument("network labels must be unique".into()));
        }
        Ok(Self { networks, labels })
    }

    pub fn single(network: AdjacencyMatrix, label: impl Into<String>) -> Self {
        Self { networks: vec![network], labels: vec![label.into()] }
    }

    pub fn n(&self) -> usize {
        self.networks[0].n()
    }

    pub fn q(&self) -> usize {
        self.networks.len()
    }

    pub fn networks(&self) -> &[AdjacencyMatrix] {
        &self.networks
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// `C[i][j] = M[i][j] * v[j]`.
pub fn col_scale(m: &DMatrix<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
    if m.ncols() != v.len() {
        return Err(Error::Dimension(format!("matrix has {} columns, vector {} entries", m.ncols(), v.len())));
    }
    let mut c = m.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col *= v[j];
    }
    Ok(c)
}

/// Undirected G(n, p) graph.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<AdjacencyMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("link probability {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < p {
                m[(i, j)] = 1.0;
                m[(j, i)] = 1.0;
            }
        }
    }
    Ok(AdjacencyMatrix { entries: m, symmetric: true })
}

/// Ring lattice with `mean_degree / 2` neighbours per side whose edges
/// `(i, j)`, `i < j`, are each rewired with probability `omega` to a node not
/// currently adjacent to `i`. Edges with no eligible target stay in place.
pub fn watts_strogatz(n: usize, mean_degree: usize, omega: f64, seed: u64) -> Result<AdjacencyMatrix> {
    if mean_degree % 2 != 0 || mean_degree == 0 {
        return Err(Error::InvalidArgument(format!("mean degree {mean_degree} must be even and positive")));
    }
    if mean_degree >= n {
        return Err(Error::InvalidArgument(format!("mean degree {mean_degree} must be below n = {n}")));
    }
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::InvalidArgument(format!("rewiring probability {omega} outside [0, 1]")));
    }
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut lattice = Vec::with_capacity(n * mean_degree / 2);
    for i in 0..n {
        for off in 1..=mean_degree / 2 {
            let j = (i + off) % n;
            adj[i].insert(j);
            adj[j].insert(i);
            lattice.push((i.min(j), i.max(j)));
        }
    }
    lattice.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (i, j) in lattice {
        if rng.gen::<f64>() >= omega {
            continue;
        }
        let candidates: Vec<usize> = (0..n).filter(|&k| k != i && !adj[i].contains(&k)).collect();
        if candidates.is_empty() {
            continue;
        }
        let k = candidates[rng.gen_range(0..candidates.len())];
        adj[i].remove(&j);
        adj[j].remove(&i);
        adj[i].insert(k);
        adj[k].insert(i);
    }
    let mut m = DMatrix::zeros(n, n);
    for (i, nbrs) in adj.iter().enumerate() {
        for &j in nbrs {
            m[(i, j)] = 1.0;
        }
    }
    Ok(AdjacencyMatrix { entries: m, symmetric: true })
}

/// Symmetric ring among `s` nodes (each linked to two others when `s >= 3`).
pub fn ring_block(s: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(s, s);
    if s >= 2 {
        for i in 0..s {
            let j = (i + 1) % s;
            if i != j {
                b[(i, j)] = 1.0;
                b[(j, i)] = 1.0;
            }
        }
    }
    b
}

/// Symmetric chain `0 - 1 - ... - (s-1)`.
pub fn chain_block(s: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(s, s);
    for i in 1..s {
        b[(i - 1, i)] = 1.0;
        b[(i, i - 1)] = 1.0;
    }
    b
}

/// Replace the leading `s x s` principal submatrix of `m` with `block`.
pub fn embed_leader_block(m: &AdjacencyMatrix, block: &DMatrix<f64>) -> Result<AdjacencyMatrix> {
    let s = block.nrows();
    if block.ncols() != s {
        return Err(Error::Dimension("leader block must be square".into()));
    }
    if s > m.n() {
        return Err(Error::Dimension(format!("leader block of size {s} exceeds n = {}", m.n())));
    }
    for i in 0..s {
        if block[(i, i)] != 0.0 {
            return Err(Error::InvalidArgument(format!("leader block has nonzero diagonal at {i}")));
        }
        for j in 0..s {
            let v = block[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidArgument("leader block must be binary".into()));
            }
            if m.symmetric && v != block[(j, i)] {
                return Err(Error::InvalidArgument("leader block must be symmetric for a symmetric network".into()));
            }
        }
    }
    let mut entries = m.entries.clone();
    entries.view_mut((0, 0), (s, s)).copy_from(block);
    Ok(AdjacencyMatrix { entries, symmetric: m.symmetric })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCheck {
    pub full_rank: bool,
    pub smallest_singular_value: f64,
    pub largest_singular_value: f64,
}

/// Whether `W (M ∘ X)_S` has full column rank.
pub fn check_instrument_rank(m: &AdjacencyMatrix, x: &DMatrix<f64>, support: &[usize]) -> Result<RankCheck> {
    let n = m.n();
    let k = x.ncols();
    if x.nrows() != n {
        return Err(Error::Dimension(format!("covariates have {} rows for {n} nodes", x.nrows())));
    }
    if support.is_empty() {
        return Err(Error::InvalidArgument("support set is empty".into()));
    }
    if support.iter().any(|&j| j >= n) {
        return Err(Error::InvalidArgument("support index out of range".into()));
    }
    if support.len() * k + k > n {
        return Err(Error::InvalidArgument("support too large for the sample size".into()));
    }
    let rank = linalg::numerical_rank(x, RANK_RTOL);
    if rank < k {
        return Err(Error::RankDeficientCovariates { rank, cols: k });
    }
    let mut b = DMatrix::zeros(n, support.len() * k);
    for c in 0..k {
        for (a, &j) in support.iter().enumerate() {
            let col = m.entries.column(j) * x[(j, c)];
            b.set_column(c * support.len() + a, &col);
        }
    }
    let wb = Projector::new(x).apply_matrix(&b);
    let sv = wb.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    Ok(RankCheck { full_rank: smax > 0.0 && smin > RANK_RTOL * smax, smallest_singular_value: smin, largest_singular_value: smax })
}

/// Irrepresentable-condition statistic
/// `max_{|u|_inf <= 1} || diag(f_Sc) Σ21 Σ11^{-1} diag(f_S)^{-1} u ||_inf`
/// with `Σ = M'WM / n` and `f = (I - M∘η0)^{-1} X β0`.
///
/// The maximum of a max-of-absolute-affine function over the cube sits at a
/// sign vertex, where it equals the largest absolute row sum.
pub fn irrepresentable_stat(
    m: &AdjacencyMatrix,
    x: &DMatrix<f64>,
    support: &[usize],
    eta0: &DVector<f64>,
    beta0: &DVector<f64>,
) -> Result<f64> {
    let b = irrepresentable_matrix(m, x, support, eta0, beta0)?;
    Ok(b.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max))
}

/// The matrix `diag(f_Sc) Σ21 Σ11^{-1} diag(f_S)^{-1}` behind [`irrepresentable_stat`].
pub fn irrepresentable_matrix(
    m: &AdjacencyMatrix,
    x: &DMatrix<f64>,
    support: &[usize],
    eta0: &DVector<f64>,
    beta0: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = m.n();
    if x.nrows() != n || eta0.len() != n || beta0.len() != x.ncols() {
        return Err(Error::Dimension("irrepresentable_stat inputs disagree in size".into()));
    }
    if support.is_empty() || support.iter().any(|&j| j >= n) {
        return Err(Error::InvalidArgument("support must be a nonempty set of node indices".into()));
    }
    let system = DMatrix::identity(n, n) - m.col_scale(eta0)?;
    let f = system
        .lu()
        .solve(&(x * beta0))
        .ok_or_else(|| Error::Singular("I - M∘η0 is singular".into()))?;
    let wm = Projector::new(x).apply_matrix(&m.entries);
    let sigma = m.entries.tr_mul(&wm) / n as f64;
    let in_s: BTreeSet<usize> = support.iter().copied().collect();
    let comp: Vec<usize> = (0..n).filter(|j| !in_s.contains(j)).collect();
    let s11 = DMatrix::from_fn(support.len(), support.len(), |a, b| sigma[(support[a], support[b])]);
    let s21 = DMatrix::from_fn(comp.len(), support.len(), |a, b| sigma[(comp[a], support[b])]);
    let s11_inv = s11.try_inverse().ok_or_else(|| Error::Singular("Σ11 is singular".into()))?;
    if linalg::all_finite_matrix(&s11_inv) && s11_inv.iter().any(|v| v.abs() > 1e14) {
        return Err(Error::Singular("Σ11 is numerically singular".into()));
    }
    for &j in support {
        if f[j] == 0.0 {
            return Err(Error::ZeroDivision(format!("f is zero at support node {j}")));
        }
    }
    let mut b = s21 * s11_inv;
    for (a, &i) in comp.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            b[(a, c)] *= f[i] / f[j];
        }
    }
    Ok(b)
}

/// Write `src,dst` rows, one per undirected edge.
pub fn write_edge_list<W: Write>(m: &AdjacencyMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["src", "dst"])?;
    for (i, j) in m.edges() {
        w.write_record([i.to_string(), j.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed edge list with the number of duplicate rows dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeListRead {
    pub network: AdjacencyMatrix,
    pub duplicates: usize,
}

/// Read a `src,dst` edge list over `n` nodes; edges are undirected.
pub fn read_edge_list<R: Read>(reader: R, n: usize) -> Result<EdgeListRead> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let src = headers.iter().position(|h| h == "src").ok_or_else(|| Error::Parse("missing `src` column".into()))?;
    let dst = headers.iter().position(|h| h == "dst").ok_or_else(|| Error::Parse("missing `dst` column".into()))?;
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    let mut duplicates = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |idx: usize| -> Result<usize> {
            rec.get(idx)
                .ok_or_else(|| Error::Parse(format!("row {}: missing field", line + 2)))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))
        };
        let (a, b) = (parse(src)?, parse(dst)?);
        if a >= n || b >= n {
            return Err(Error::InvalidArgument(format!("row {}: node id out of range (n = {n})", line + 2)));
        }
        let key = (a.min(b), a.max(b));
        if !seen.insert(key) {
            duplicates += 1;
            continue;
        }
        edges.push(key);
    }
    Ok(EdgeListRead { network: AdjacencyMatrix::from_edges(n, &edges)?, duplicates })
}

/// Read a `label,path` manifest of edge-list files (paths relative to the manifest).
pub fn read_multinetwork(manifest: &Path, n: usize) -> Result<MultiNetwork> {
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(manifest)?;
    let mut networks = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let label = rec.get(0).ok_or_else(|| Error::Parse("manifest row missing label".into()))?;
        let path = rec.get(1).ok_or_else(|| Error::Parse("manifest row missing path".into()))?;
        let file = std::fs::File::open(base.join(path))?;
        networks.push(read_edge_list(file, n)?.network);
        labels.push(label.to_string());
    }
    MultiNetwork::new(networks, labels)
}
