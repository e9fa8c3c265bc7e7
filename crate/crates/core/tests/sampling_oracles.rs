use std::collections::BTreeSet;

use glocal_core::graph::{build_knn_graph, split_dense_sparse, DataGraph};
use glocal_core::io::{FeatureMatrix, FeatureRole};
use glocal_core::sampling::{
    incremental_sampling, one_time_sampling, tendency_weight, TendencyMode, WalkContext,
};
use glocal_core::synth::two_blobs;
use proptest::prelude::*;

const SIGMA: f64 = 1.5;

struct Naive {
    adj: Vec<Vec<bool>>,
    ae: Vec<Vec<f64>>,
    sa: Vec<Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl Naive {
    fn n(&self) -> usize {
        self.adj.len()
    }
    fn degree(&self, p: usize) -> usize {
        self.adj[p].iter().filter(|&&a| a).count()
    }
    fn common(&self, p: usize, q: usize) -> Vec<usize> {
        (0..self.n()).filter(|&r| self.adj[p][r] && self.adj[q][r]).collect()
    }
    fn cos(&self, p: usize, q: usize) -> f64 {
        let d: f64 = self.sa[p].iter().zip(&self.sa[q]).map(|(a, b)| a * b).sum();
        d / (norm(&self.sa[p]) * norm(&self.sa[q]))
    }
    fn excess(&self, p: usize, q: usize) -> f64 {
        let c = self.common(p, q);
        let mut sum = 0.0;
        let mut pairs = 0;
        for s in &c {
            for t in &c {
                if s < t {
                    sum += self.cos(*s, *t);
                    pairs += 1;
                }
            }
        }
        let expected = if pairs == 0 { 0.0 } else { sum / pairs as f64 };
        self.cos(p, q) - expected
    }
    fn coupling(&self, p: usize, q: usize) -> f64 {
        self.common(p, q).iter().map(|&r| self.excess(p, r) * self.excess(q, r)).sum()
    }
    fn dense(&self, p: usize, q: usize) -> f64 {
        self.cos(p, q) + self.coupling(p, q) / (1.0 + (self.degree(q) as f64).ln())
    }
    fn edge_range(&self, f: &[Vec<f64>]) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in 0..self.n() {
            for q in p + 1..self.n() {
                if self.adj[p][q] {
                    let d = diff(&f[p], &f[q]);
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
            }
        }
        (lo, hi)
    }
    fn gap(&self, p: usize, q: usize) -> f64 {
        let (la, ha) = self.edge_range(&self.ae);
        let (ls, hs) = self.edge_range(&self.sa);
        let a = (diff(&self.ae[p], &self.ae[q]) - la) / (ha - la);
        let s = (diff(&self.sa[p], &self.sa[q]) - ls) / (hs - ls);
        (a - s).abs()
    }
    fn sparse(&self, p: usize, q: usize) -> f64 {
        self.gap(p, q) / (1.0 + (self.degree(q) as f64).ln())
    }
    fn density(&self, q: usize) -> f64 {
        let ns: Vec<usize> = (0..self.n()).filter(|&p| self.adj[p][q]).collect();
        let s: f64 = ns
            .iter()
            .map(|&p| (-diff(&self.sa[p], &self.sa[q]) / (2.0 * SIGMA * SIGMA)).exp())
            .sum();
        s / ns.len() as f64
    }
    fn rel_density(&self, of: usize, from: usize) -> f64 {
        let a = if self.adj[from][of] { 1.0 } else { 0.0 };
        (self.density(of) - a * self.density(from)).max(1e-6)
    }
    fn cost(&self, p: usize, q: usize) -> f64 {
        let c = diff(&self.ae[p], &self.ae[q]) * self.rel_density(q, p) / self.rel_density(p, q);
        c.max(1e-6)
    }
    fn tendency(&self, p: usize, q: usize, i_cum: &[f64], dense: bool) -> f64 {
        let c = self.common(p, q);
        let denom: f64 = c.iter().map(|&t| i_cum[t]).sum();
        let factor = if c.is_empty() {
            None
        } else if denom > 0.0 {
            Some(i_cum[q] / denom)
        } else {
            Some(1.0 / c.len() as f64)
        };
        if dense {
            self.cos(p, q) + factor.unwrap_or(0.0) * self.coupling(p, q)
        } else {
            factor.unwrap_or(1.0) * self.gap(p, q)
        }
    }
}

fn fixture(n: usize, edges: &[(usize, usize)]) -> (WalkContext, Naive) {
    let ae: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![(i as f64 * 1.3).sin() * 3.0, (i as f64 * 0.7).cos(), i as f64 * 0.2])
        .collect();
    let sa: Vec<Vec<f64>> = (0..n)
        .map(|i| vec![1.0 + (i as f64 * 0.9).cos(), 2.0 + (i as f64 * 0.4).sin(), 0.5 + i as f64 * 0.1])
        .collect();
    let g = DataGraph::from_edges(n, edges, 3).unwrap();
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in edges {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    let fae = FeatureMatrix::from_rows(&ae, FeatureRole::GlobalAe).unwrap();
    let fsa = FeatureMatrix::from_rows(&sa, FeatureRole::LocalSa).unwrap();
    let ctx = WalkContext::new(g, &fae, &fsa, Some(SIGMA), 1).unwrap();
    // features go through f32 storage; compare against the same values
    let naive = Naive {
        adj,
        ae: fae.to_rows_f64(),
        sa: fsa.to_rows_f64(),
    };
    (ctx, naive)
}

const FIVE: &[(usize, usize)] = &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (3, 4), (2, 4)];
const EIGHT: &[(usize, usize)] = &[
    (0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (3, 4), (4, 5), (4, 6), (5, 6), (5, 7), (6, 7), (2, 5),
];

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn similarity_excess_matches_enumeration() {
    let (ctx, naive) = fixture(5, FIVE);
    let view = ctx.full_view();
    for p in 0..5 {
        for q in 0..5 {
            if p != q {
                let (got, want) = (ctx.similarity_excess(&view, p, q), naive.excess(p, q));
                assert!(close(got, want), "S({p},{q}) = {got}, oracle {want}");
            }
        }
    }
}

#[test]
fn visiting_weights_and_cost_match_enumeration() {
    let (ctx, naive) = fixture(8, EIGHT);
    let view = ctx.full_view();
    for &(a, b) in EIGHT {
        for (p, q) in [(a, b), (b, a)] {
            assert!(close(ctx.visit_weight_dense(&view, p, q), naive.dense(p, q)), "dense {p}->{q}");
            assert!(close(ctx.visit_weight_sparse(&view, p, q), naive.sparse(p, q)), "sparse {p}->{q}");
            assert!(close(ctx.step_cost(p, q), naive.cost(p, q)), "cost {p}->{q}");
        }
    }
}

#[test]
fn tendency_weights_match_enumeration() {
    let (ctx, naive) = fixture(8, EIGHT);
    let i_cums = [
        vec![0.0; 8],
        vec![3.0, 0.0, 1.0, 2.0, 5.0, 0.0, 1.0, 4.0],
        vec![1.0; 8],
    ];
    for i_cum in &i_cums {
        for &(a, b) in EIGHT {
            for (p, q) in [(a, b), (b, a)] {
                for (mode, dense) in [(TendencyMode::Dense, true), (TendencyMode::Sparse, false)] {
                    let got = tendency_weight(&ctx, p, q, i_cum, mode);
                    let want = naive.tendency(p, q, i_cum, dense);
                    assert!(close(got, want), "{mode:?} {p}->{q}: {got} vs {want}");
                }
            }
        }
    }
}

fn barbell() -> (WalkContext, glocal_core::graph::GraphPartition) {
    let edges = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5)];
    let (ctx, _) = fixture(6, &edges);
    let part = split_dense_sparse(&ctx.graph);
    (ctx, part)
}

#[test]
fn short_run_agrees_with_long_run_ranking() {
    let (ctx, part) = barbell();
    let reference = one_time_sampling(&ctx, &part, 2, 100_000).unwrap();
    let short = one_time_sampling(&ctx, &part, 2, 200).unwrap();
    let as_set = |v: &[usize]| v.iter().copied().collect::<BTreeSet<_>>();
    assert_eq!(as_set(&short.selected), as_set(&reference.selected));
}

#[test]
fn small_two_blob_incremental_run() {
    let feats = two_blobs(15, 4).unwrap();
    let g = build_knn_graph(&feats.f_ae, 5).unwrap();
    let part = split_dense_sparse(&g);
    let ctx = WalkContext::new(g, &feats.f_ae, &feats.f_sa, None, 2).unwrap();
    let out = incremental_sampling(&ctx, &part, 5, 30).unwrap();
    assert!(out.batches() <= 6, "{} batches", out.batches());
    let blobs: BTreeSet<usize> = out.samples.selected.iter().map(|&i| feats.cluster[i]).collect();
    assert_eq!(blobs.len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn selections_are_distinct_and_sized(n in 6usize..40, k in 2usize..6, n_s in 1usize..50, seed in any::<u64>()) {
        let feats = two_blobs(n / 2 + 1, seed).unwrap();
        let g = build_knn_graph(&feats.f_ae, k).unwrap();
        let part = split_dense_sparse(&g);
        let total = g.n();
        let ctx = WalkContext::new(g, &feats.f_ae, &feats.f_sa, None, seed).unwrap();
        let s = one_time_sampling(&ctx, &part, n_s, 3).unwrap();
        prop_assert_eq!(s.len(), n_s.min(total));
        let uniq: BTreeSet<usize> = s.selected.iter().copied().collect();
        prop_assert_eq!(uniq.len(), s.len());

        let inc = incremental_sampling(&ctx, &part, n_s, 3).unwrap();
        let uniq: BTreeSet<usize> = inc.samples.selected.iter().copied().collect();
        prop_assert_eq!(uniq.len(), inc.samples.len());
        prop_assert!(inc.samples.iteration.windows(2).all(|w| w[0] <= w[1]));
    }
}
