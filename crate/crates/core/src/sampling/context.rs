use crate::error::{Error, Result};
use crate::graph::{default_sigma_den, graph_density, DataGraph, DensityVector, GraphPartition, DENSITY_EPS};
use crate::io::FeatureMatrix;
use crate::util::{dist, dot};

use super::MIN_STEP_COST;

/// Min-max bounds of a family of distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub lo: f64,
    pub hi: f64,
}

impl MinMax {
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Self {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo.is_finite() {
            Self { lo, hi }
        } else {
            Self { lo: 0.0, hi: 0.0 }
        }
    }

    pub fn scale(&self, x: f64) -> f64 {
        minmax_scale(x, self.lo, self.hi)
    }
}

/// `(x − lo) / (hi − lo)` clamped to `[0, 1]`; 0 when the range is empty.
pub fn minmax_scale(x: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Read-only state shared by every walk over one data graph.
#[derive(Debug, Clone)]
pub struct WalkContext {
    pub graph: DataGraph,
    pub f_ae: Vec<Vec<f64>>,
    pub f_sa: Vec<Vec<f64>>,
    sa_unit: Vec<Vec<f64>>,
    pub density: DensityVector,
    pub psi_ae: MinMax,
    pub psi_sa: MinMax,
    pub rng_seed: u64,
}

impl WalkContext {
    /// `sigma_den = None` uses the median edge length in the local feature space.
    pub fn new(
        graph: DataGraph,
        f_ae: &FeatureMatrix,
        f_sa: &FeatureMatrix,
        sigma_den: Option<f64>,
        rng_seed: u64,
    ) -> Result<Self> {
        let n = graph.n();
        if f_ae.n_samples() != n || f_sa.n_samples() != n {
            return Err(Error::Shape(format!(
                "graph has {n} nodes but features have {} / {} rows",
                f_ae.n_samples(),
                f_sa.n_samples()
            )));
        }
        let sigma = sigma_den.unwrap_or_else(|| default_sigma_den(&graph, f_sa));
        let density = graph_density(&graph, f_sa, sigma)?;
        let f_ae = f_ae.to_rows_f64();
        let f_sa = f_sa.to_rows_f64();
        let sa_unit = f_sa
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let norm = dot(r, r).sqrt();
                if norm == 0.0 {
                    return Err(Error::Data(format!("node {i} has a zero-norm local feature")));
                }
                Ok(r.iter().map(|v| v / norm).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let edges = graph.edges();
        let psi_ae = MinMax::from_values(edges.iter().map(|&(p, q)| dist(&f_ae[p], &f_ae[q])));
        let psi_sa = MinMax::from_values(edges.iter().map(|&(p, q)| dist(&f_sa[p], &f_sa[q])));
        Ok(Self {
            graph,
            f_ae,
            f_sa,
            sa_unit,
            density,
            psi_ae,
            psi_sa,
            rng_seed,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn full_view(&self) -> View<'_> {
        View {
            graph: &self.graph,
            nodes: None,
        }
    }

    /// Cosine similarity of the local features of two parent-graph nodes.
    pub fn cos(&self, a: usize, b: usize) -> f64 {
        dot(&self.sa_unit[a], &self.sa_unit[b])
    }

    pub fn ae_dist(&self, a: usize, b: usize) -> f64 {
        dist(&self.f_ae[a], &self.f_ae[b])
    }

    pub fn sa_dist(&self, a: usize, b: usize) -> f64 {
        dist(&self.f_sa[a], &self.f_sa[b])
    }

    /// `|Ψ_AE(‖Δf_AE‖) − Ψ_SA(‖Δf_SA‖)|` between two parent-graph nodes.
    pub fn scaled_gap(&self, a: usize, b: usize) -> f64 {
        (self.psi_ae.scale(self.ae_dist(a, b)) - self.psi_sa.scale(self.sa_dist(a, b))).abs()
    }

    /// Mean pairwise cosine similarity over a set of parent-graph nodes (0 below two nodes).
    pub fn expected_cos(&self, nodes: &[usize]) -> f64 {
        if nodes.len() < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for (i, &s) in nodes.iter().enumerate() {
            for &t in &nodes[i + 1..] {
                total += self.cos(s, t);
            }
        }
        let pairs = nodes.len() * (nodes.len() - 1) / 2;
        total / pairs as f64
    }

    /// `S(p, q)`: cosine similarity minus the expected similarity inside the
    /// common neighbourhood of `p` and `q` in `view`.
    pub fn similarity_excess(&self, view: &View<'_>, p: usize, q: usize) -> f64 {
        let common = view.global_nodes(&view.graph.common_neighbors(p, q));
        self.cos(view.global(p), view.global(q)) - self.expected_cos(&common)
    }

    /// Dense-graph visiting weight
    /// `S_cos(p,q) + Σ_{r ∈ N(p,q)} S(p,r) S(q,r) / (1 + ln d_q)`.
    pub fn visit_weight_dense(&self, view: &View<'_>, p: usize, q: usize) -> f64 {
        let coupling: f64 = view
            .graph
            .common_neighbors(p, q)
            .into_iter()
            .map(|r| self.similarity_excess(view, p, r) * self.similarity_excess(view, q, r))
            .sum();
        let d_q = view.graph.degree(q).max(1) as f64;
        self.cos(view.global(p), view.global(q)) + coupling / (1.0 + d_q.ln())
    }

    /// Sparse-graph visiting weight `|Ψ_AE − Ψ_SA| / (1 + ln d_q)`.
    pub fn visit_weight_sparse(&self, view: &View<'_>, p: usize, q: usize) -> f64 {
        let d_q = view.graph.degree(q).max(1) as f64;
        self.scaled_gap(view.global(p), view.global(q)) / (1.0 + d_q.ln())
    }

    /// Relative density of `a` seen from `b` (parent-graph indices), floored at ε.
    pub fn relative_density(&self, a: usize, b: usize) -> f64 {
        self.density.relative(&self.graph, b, a).max(DENSITY_EPS)
    }

    /// Cost of moving from `p` to `q` (parent-graph indices):
    /// `‖Δf_AE‖ · D̂(q) / D̂(p)` with each relative density taken against the other endpoint.
    pub fn step_cost(&self, p: usize, q: usize) -> f64 {
        let ratio = self.relative_density(q, p) / self.relative_density(p, q);
        (self.ae_dist(p, q) * ratio).max(MIN_STEP_COST)
    }

    /// Which tendency weight a parent-graph node walks with.
    pub fn modes(&self, part: &GraphPartition) -> Vec<super::TendencyMode> {
        let mut modes = vec![super::TendencyMode::Sparse; self.n()];
        for &p in &part.dense.nodes {
            modes[p] = super::TendencyMode::Dense;
        }
        modes
    }
}

/// A graph plus the parent-graph index of each of its nodes.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub graph: &'a DataGraph,
    pub nodes: Option<&'a [usize]>,
}

impl<'a> View<'a> {
    pub fn of(sub: &'a crate::graph::Subgraph) -> Self {
        Self {
            graph: &sub.graph,
            nodes: Some(&sub.nodes),
        }
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    #[inline]
    pub fn global(&self, local: usize) -> usize {
        self.nodes.map_or(local, |n| n[local])
    }

    pub fn global_nodes(&self, local: &[usize]) -> Vec<usize> {
        local.iter().map(|&l| self.global(l)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::FeatureRole;

    fn fm(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows, FeatureRole::LocalSa).unwrap()
    }

    fn k4_ctx(sa: &[Vec<f64>]) -> WalkContext {
        let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let g = DataGraph::from_edges(4, &edges, 2).unwrap();
        let ae = fm(&[vec![0.0], vec![1.0], vec![3.0], vec![6.0]]);
        WalkContext::new(g, &ae, &fm(sa), Some(1.0), 0).unwrap()
    }

    #[test]
    fn minmax_cases() {
        assert_eq!(minmax_scale(5.0, 0.0, 10.0), 0.5);
        assert_eq!(minmax_scale(0.0, 0.0, 10.0), 0.0);
        assert_eq!(minmax_scale(10.0, 0.0, 10.0), 1.0);
        assert_eq!(minmax_scale(3.0, 2.0, 2.0), 0.0);
    }

    #[test]
    fn identical_features_zero_excess_unit_weight() {
        let ctx = k4_ctx(&vec![vec![1.0, 1.0]; 4]);
        let v = ctx.full_view();
        assert!(ctx.similarity_excess(&v, 0, 1).abs() < 1e-15);
        assert!((ctx.visit_weight_dense(&v, 0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_common_neighbourhood() {
        let g = DataGraph::from_edges(3, &[(0, 1), (1, 2)], 1).unwrap();
        let sa = fm(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]);
        let ctx = WalkContext::new(g, &sa, &sa, None, 0).unwrap();
        let v = ctx.full_view();
        assert_eq!(ctx.similarity_excess(&v, 0, 1), ctx.cos(0, 1));
        assert_eq!(ctx.visit_weight_dense(&v, 0, 1), ctx.cos(0, 1));
    }

    #[test]
    fn zero_norm_feature_rejected() {
        let g = DataGraph::from_edges(2, &[(0, 1)], 1).unwrap();
        let sa = fm(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
        assert!(matches!(WalkContext::new(g, &sa, &sa, None, 0), Err(Error::Data(_))));
    }

    #[test]
    fn sparse_weight_cases() {
        // AE and SA distances proportional -> equal scaled gaps
        let g = DataGraph::from_edges(3, &[(0, 1), (1, 2)], 1).unwrap();
        let ae = fm(&[vec![1.0], vec![2.0], vec![4.0]]);
        let sa = fm(&[vec![2.0], vec![4.0], vec![8.0]]);
        let ctx = WalkContext::new(g.clone(), &ae, &sa, None, 0).unwrap();
        assert!(ctx.visit_weight_sparse(&ctx.full_view(), 0, 1).abs() < 1e-15);

        // Ψ_AE = 1, Ψ_SA = 0, d_q = 1
        let g = DataGraph::from_edges(4, &[(0, 1), (2, 3)], 1).unwrap();
        let ae = fm(&[vec![0.0], vec![5.0], vec![0.0], vec![1.0]]);
        let sa = fm(&[vec![1.0], vec![1.5], vec![1.0], vec![3.0]]);
        let ctx = WalkContext::new(g, &ae, &sa, None, 0).unwrap();
        assert_eq!(ctx.visit_weight_sparse(&ctx.full_view(), 0, 1), 1.0);
    }

    #[test]
    fn step_cost_cases() {
        // equal densities: identical local features everywhere
        let ctx = k4_ctx(&vec![vec![1.0, 2.0]; 4]);
        assert!((ctx.step_cost(0, 2) - 3.0).abs() < 1e-12);
        // identical AE features -> clamp
        let g = DataGraph::from_edges(2, &[(0, 1)], 1).unwrap();
        let ae = fm(&[vec![1.0], vec![1.0]]);
        let sa = fm(&[vec![1.0], vec![2.0]]);
        let ctx = WalkContext::new(g, &ae, &sa, None, 0).unwrap();
        assert_eq!(ctx.step_cost(0, 1), MIN_STEP_COST);
    }
}
