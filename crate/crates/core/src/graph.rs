//! Symmetrised k-NN data graph, dense/sparse partition, centralities and
//! feature-space graph density.
//!
//! Graphs are serialised in the GLGR layout:
//!
//! ```text
//! "GLGR" | n: u32 LE | k: u32 LE | edges: u32 LE | edges x (p: u32 LE, q: u32 LE), p < q, sorted
//! ```

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::FeatureMatrix;
use crate::util::{dist, median};

pub const DEFAULT_K: usize = 10;
pub const GLGR_MAGIC: &[u8; 4] = b"GLGR";
/// Floor applied to graph densities.
pub const DENSITY_EPS: f64 = 1e-6;
pub const EIGEN_MAX_ITERATIONS: usize = 1000;
pub const EIGEN_TOLERANCE: f64 = 1e-8;
/// Largest component handed to the dense eigensolver when power iteration stalls.
const DENSE_FALLBACK_LIMIT: usize = 2000;

/// Undirected simple graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataGraph {
    adjacency: Vec<Vec<usize>>,
    pub k_nn: usize,
}

impl DataGraph {
    /// Builds a graph from undirected edges; duplicates and orientation are normalised.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], k_nn: usize) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(p, q) in edges {
            if p >= n || q >= n {
                return Err(Error::Shape(format!("edge ({p}, {q}) out of range for {n} nodes")));
            }
            if p == q {
                return Err(Error::Data(format!("self-loop on node {p}")));
            }
            adjacency[p].push(q);
            adjacency[q].push(p);
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { adjacency, k_nn })
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, p: usize) -> &[usize] {
        &self.adjacency[p]
    }

    pub fn degree(&self, p: usize) -> usize {
        self.adjacency[p].len()
    }

    pub fn has_edge(&self, p: usize, q: usize) -> bool {
        self.adjacency[p].binary_search(&q).is_ok()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(p, q)` with `p < q`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(p, ns)| ns.iter().filter(move |&&q| q > p).map(move |&q| (p, q)))
            .collect()
    }

    /// Sorted common neighbours of `p` and `q`.
    pub fn common_neighbors(&self, p: usize, q: usize) -> Vec<usize> {
        let (a, b) = (&self.adjacency[p], &self.adjacency[q]);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out
    }

    /// Subgraph induced by `nodes` (given as indices into `self`).
    pub fn induced(&self, nodes: &[usize]) -> Subgraph {
        let mut local = vec![usize::MAX; self.n()];
        for (i, &g) in nodes.iter().enumerate() {
            local[g] = i;
        }
        let adjacency = nodes
            .iter()
            .map(|&g| {
                self.adjacency[g]
                    .iter()
                    .filter_map(|&q| (local[q] != usize::MAX).then_some(local[q]))
                    .collect::<Vec<_>>()
            })
            .map(|mut v| {
                v.sort_unstable();
                v
            })
            .collect();
        Subgraph {
            nodes: nodes.to_vec(),
            graph: DataGraph {
                adjacency,
                k_nn: self.k_nn,
            },
        }
    }

    /// Connected component label of every node, numbered by smallest member.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n()];
        let mut next = 0;
        for s in 0..self.n() {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            let mut queue = VecDeque::from([s]);
            while let Some(p) = queue.pop_front() {
                for &q in &self.adjacency[p] {
                    if label[q] == usize::MAX {
                        label[q] = next;
                        queue.push_back(q);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Unweighted BFS distances from `s` (`usize::MAX` when unreachable).
    pub fn bfs(&self, s: usize) -> Vec<usize> {
        let mut d = vec![usize::MAX; self.n()];
        d[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(p) = queue.pop_front() {
            for &q in &self.adjacency[p] {
                if d[q] == usize::MAX {
                    d[q] = d[p] + 1;
                    queue.push_back(q);
                }
            }
        }
        d
    }
}

/// A subgraph together with the parent-graph index of each of its nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    pub nodes: Vec<usize>,
    pub graph: DataGraph,
}

impl Subgraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Symmetrised k-NN graph over the rows of `features` (Euclidean distance,
/// ties to the smaller index).
pub fn build_knn_graph(features: &FeatureMatrix, k: usize) -> Result<DataGraph> {
    let n = features.n_samples();
    if k == 0 || k >= n {
        return Err(Error::Param(format!("k = {k} must be in 1..{n}")));
    }
    let rows = features.to_rows_f64();
    let directed: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&q| q != p)
                .map(|q| (crate::util::sq_dist(&rows[p], &rows[q]), q))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().take(k).map(|(_, q)| q).collect()
        })
        .collect();
    let edges: Vec<(usize, usize)> = directed
        .iter()
        .enumerate()
        .flat_map(|(p, qs)| qs.iter().map(move |&q| (p, q)))
        .collect();
    DataGraph::from_edges(n, &edges, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphPartition {
    pub dense: Subgraph,
    pub sparse: Subgraph,
    pub tau_d: f64,
    pub mu_d: f64,
    pub sigma_d: f64,
}

/// Nodes with degree above `μ + 3σ` of the degree distribution form the dense subgraph.
pub fn split_dense_sparse(g: &DataGraph) -> GraphPartition {
    let degrees: Vec<f64> = (0..g.n()).map(|p| g.degree(p) as f64).collect();
    let (mu_d, sigma_d) = crate::util::mean_std(&degrees);
    let tau_d = mu_d + 3.0 * sigma_d;
    let (dense, sparse): (Vec<usize>, Vec<usize>) = (0..g.n()).partition(|&p| degrees[p] > tau_d);
    GraphPartition {
        dense: g.induced(&dense),
        sparse: g.induced(&sparse),
        tau_d,
        mu_d,
        sigma_d,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenCentrality {
    pub values: Vec<f64>,
    /// Dominant eigenvalue of the component each node belongs to.
    pub kappa: Vec<f64>,
}

impl EigenCentrality {
    pub fn kappa_max(&self) -> f64 {
        self.kappa.iter().copied().fold(0.0, f64::max)
    }

    /// `max_p |(A e)_p − κ_{comp(p)} e_p|`.
    pub fn residual(&self, g: &DataGraph) -> f64 {
        (0..g.n())
            .map(|p| {
                let ae: f64 = g.neighbors(p).iter().map(|&q| self.values[q]).sum();
                (ae - self.kappa[p] * self.values[p]).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn eigen_centrality(g: &DataGraph) -> Result<EigenCentrality> {
    eigen_centrality_with(g, EIGEN_MAX_ITERATIONS, EIGEN_TOLERANCE)
}

/// Eigenvector centrality computed per connected component.
///
/// Each component's Perron vector is scaled by its eigenvalue before the
/// whole vector is normalised to unit length, so isolated nodes score 0 and
/// components rank by spectral radius.
pub fn eigen_centrality_with(g: &DataGraph, max_iter: usize, tol: f64) -> Result<EigenCentrality> {
    let n = g.n();
    if n == 0 {
        return Err(Error::Empty("eigen centrality of an empty graph".into()));
    }
    let labels = g.components();
    let n_comp = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); n_comp];
    for (p, &c) in labels.iter().enumerate() {
        members[c].push(p);
    }
    let mut values = vec![0.0; n];
    let mut kappa = vec![0.0; n];
    for nodes in &members {
        if nodes.len() == 1 {
            continue;
        }
        let sub = g.induced(nodes).graph;
        let (vec, k) = component_eigen(&sub, max_iter, tol)?;
        for (i, &p) in nodes.iter().enumerate() {
            values[p] = vec[i] * k;
            kappa[p] = k;
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    } else {
        values.iter_mut().for_each(|v| *v = 1.0 / (n as f64).sqrt());
    }
    Ok(EigenCentrality { values, kappa })
}

fn residual_of(g: &DataGraph, x: &[f64]) -> (f64, f64) {
    let ax: Vec<f64> = (0..g.n()).map(|p| g.neighbors(p).iter().map(|&q| x[q]).sum()).collect();
    let kappa: f64 = ax.iter().zip(x).map(|(a, b)| a * b).sum();
    let r = ax
        .iter()
        .zip(x)
        .map(|(a, b)| (a - kappa * b).abs())
        .fold(0.0, f64::max);
    (kappa, r)
}

/// Unit, non-negative dominant eigenvector of a connected graph.
fn component_eigen(g: &DataGraph, max_iter: usize, tol: f64) -> Result<(Vec<f64>, f64)> {
    let n = g.n();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        // (A + I) x: the shift keeps bipartite components from oscillating
        let mut y: Vec<f64> = (0..n)
            .map(|p| x[p] + g.neighbors(p).iter().map(|&q| x[q]).sum::<f64>())
            .collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= norm);
        x = y;
        let (kappa, r) = residual_of(g, &x);
        last = r;
        if r < tol {
            return Ok((x, kappa));
        }
    }
    if n > DENSE_FALLBACK_LIMIT {
        return Err(Error::Solver {
            what: format!("power iteration on a {n}-node component"),
            residual: last,
        });
    }
    log::debug!("power iteration stalled at residual {last:e} on {n} nodes; using dense solver");
    let a = DMatrix::<f64>::from_fn(n, n, |p, q| if g.has_edge(p, q) { 1.0 } else { 0.0 });
    let eig = a.symmetric_eigen();
    let top = (0..n)
        .max_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]))
        .expect("non-empty");
    let col = eig.eigenvectors.column(top);
    let sign: f64 = if col.sum() < 0.0 { -1.0 } else { 1.0 };
    let mut x: Vec<f64> = col.iter().map(|v| (sign * v).max(0.0)).collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    let (kappa, r) = residual_of(g, &x);
    if r >= tol.max(1e-6) {
        return Err(Error::Solver {
            what: format!("eigen centrality on a {n}-node component"),
            residual: r,
        });
    }
    Ok((x, kappa))
}

/// `n_reach / Σ dist` over the nodes reachable from each node (including itself); isolated nodes score 0.
pub fn closeness_centrality(g: &DataGraph) -> Vec<f64> {
    (0..g.n())
        .into_par_iter()
        .map(|p| {
            let d = g.bfs(p);
            let (reach, total) = d
                .iter()
                .filter(|&&v| v != usize::MAX)
                .fold((0usize, 0usize), |(c, s), &v| (c + 1, s + v));
            if total == 0 {
                0.0
            } else {
                reach as f64 / total as f64
            }
        })
        .collect()
}

/// Per-node mean kernel similarity to graph neighbours in the local feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector {
    pub d_sa: Vec<f64>,
    pub sigma_den: f64,
}

impl DensityVector {
    /// Density of `q` relative to the step origin `p`: `max(D(q) − A(p,q) D(p), ε)`.
    pub fn relative(&self, g: &DataGraph, p: usize, q: usize) -> f64 {
        let a = if g.has_edge(p, q) { 1.0 } else { 0.0 };
        (self.d_sa[q] - a * self.d_sa[p]).max(DENSITY_EPS)
    }
}

/// Median Euclidean feature distance over edges (1 when the graph has no
/// edges or the median is 0).
pub fn default_sigma_den(g: &DataGraph, f_sa: &FeatureMatrix) -> f64 {
    let d: Vec<f64> = g
        .edges()
        .into_iter()
        .map(|(p, q)| dist(&f_sa.row_f64(p), &f_sa.row_f64(q)))
        .collect();
    median(&d).filter(|&s| s > 0.0).unwrap_or(1.0)
}

pub fn graph_density(g: &DataGraph, f_sa: &FeatureMatrix, sigma_den: f64) -> Result<DensityVector> {
    if !(sigma_den > 0.0) || !sigma_den.is_finite() {
        return Err(Error::Param(format!("sigma_den = {sigma_den} must be positive")));
    }
    if f_sa.n_samples() != g.n() {
        return Err(Error::Shape(format!("{} feature rows for {} nodes", f_sa.n_samples(), g.n())));
    }
    let rows = f_sa.to_rows_f64();
    let denom = 2.0 * sigma_den * sigma_den;
    let d_sa = (0..g.n())
        .map(|q| {
            let ns = g.neighbors(q);
            if ns.is_empty() {
                return DENSITY_EPS;
            }
            let s: f64 = ns.iter().map(|&p| (-dist(&rows[p], &rows[q]) / denom).exp()).sum();
            s / ns.len() as f64
        })
        .collect();
    Ok(DensityVector { d_sa, sigma_den })
}

pub fn encode_graph(g: &DataGraph) -> Vec<u8> {
    let edges = g.edges();
    let mut out = Vec::with_capacity(16 + edges.len() * 8);
    out.extend_from_slice(GLGR_MAGIC);
    for v in [g.n(), g.k_nn, edges.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for (p, q) in edges {
        out.extend_from_slice(&(p as u32).to_le_bytes());
        out.extend_from_slice(&(q as u32).to_le_bytes());
    }
    out
}

pub fn decode_graph(bytes: &[u8]) -> Result<DataGraph> {
    if bytes.len() < 16 || &bytes[..4] != GLGR_MAGIC {
        return Err(Error::Format("missing GLGR magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (n, k, m) = (word(4), word(8), word(12));
    if bytes.len() != 16 + 8 * m {
        return Err(Error::Format(format!(
            "GLGR declares {m} edges but holds {} bytes of edge data",
            bytes.len() - 16
        )));
    }
    let mut edges = Vec::with_capacity(m);
    for e in 0..m {
        let (p, q) = (word(16 + 8 * e), word(20 + 8 * e));
        if p >= q || q >= n {
            return Err(Error::Format(format!("invalid edge ({p}, {q}) for {n} nodes")));
        }
        if edges.last().is_some_and(|&last| last >= (p, q)) {
            return Err(Error::Format("GLGR edges must be sorted and unique".into()));
        }
        edges.push((p, q));
    }
    DataGraph::from_edges(n, &edges, k)
}

pub fn save_graph(g: &DataGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_graph(g)).map_err(|e| Error::io(path, e))
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<DataGraph> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_graph(&bytes)
}
