use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::context::{View, WalkContext};

/// `w / Σw` over one neighbourhood, with negative weights clamped to 0 and a
/// uniform fallback when nothing positive remains.
pub fn transition_probabilities(weights: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = weights
        .iter()
        .map(|&w| if w > 0.0 && w.is_finite() { w } else { 0.0 })
        .collect();
    let total: f64 = clamped.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        let u = 1.0 / weights.len() as f64;
        return vec![u; weights.len()];
    }
    clamped.iter().map(|w| w / total).collect()
}

/// Index drawn from `probs` with a uniform variate `u ∈ [0, 1)`.
fn pick(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left the total a hair under 1: last positive entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// One random-walk move from `p` (view-local index) with weights `weight(p, q)`.
pub fn rw_step<R: Rng + ?Sized>(
    view: &View<'_>,
    p: usize,
    weight: impl Fn(usize, usize) -> f64,
    rng: &mut R,
) -> Result<usize> {
    let ns = view.graph.neighbors(p);
    if ns.is_empty() {
        return Err(Error::Walk(format!("node {} has no neighbours", view.global(p))));
    }
    let w: Vec<f64> = ns.iter().map(|&q| weight(p, q)).collect();
    let probs = transition_probabilities(&w);
    Ok(ns[pick(&probs, rng.gen::<f64>())])
}

/// Precomputed transition probabilities for every node of a view.
#[derive(Debug, Clone)]
pub(crate) struct TransitionTable {
    offsets: Vec<usize>,
    probs: Vec<f64>,
}

impl TransitionTable {
    /// Evaluates `weight(p, q)` once per directed edge of `view`.
    pub fn build(view: &View<'_>, weight: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let rows: Vec<Vec<f64>> = (0..view.n())
            .into_par_iter()
            .map(|p| {
                let ns = view.graph.neighbors(p);
                if ns.is_empty() {
                    return Vec::new();
                }
                let w: Vec<f64> = ns.iter().map(|&q| weight(p, q)).collect();
                transition_probabilities(&w)
            })
            .collect();
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        for r in &rows {
            offsets.push(offsets.last().unwrap() + r.len());
        }
        Self {
            offsets,
            probs: rows.concat(),
        }
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.probs[self.offsets[p]..self.offsets[p + 1]]
    }

    /// Next node from `p`, or `None` when `p` is isolated in the view.
    pub fn step<R: Rng + ?Sized>(&self, view: &View<'_>, p: usize, rng: &mut R) -> Option<usize> {
        let ns = view.graph.neighbors(p);
        if ns.is_empty() {
            return None;
        }
        Some(ns[pick(self.row(p), rng.gen::<f64>())])
    }
}

/// `S(p, q)` for every directed edge of a view, in adjacency order.
#[derive(Debug, Clone)]
pub(crate) struct ExcessTable {
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl ExcessTable {
    pub fn build(ctx: &WalkContext, view: &View<'_>) -> Self {
        let rows: Vec<Vec<f64>> = (0..view.n())
            .into_par_iter()
            .map(|p| {
                view.graph
                    .neighbors(p)
                    .iter()
                    .map(|&q| ctx.similarity_excess(view, p, q))
                    .collect()
            })
            .collect();
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        for r in &rows {
            offsets.push(offsets.last().unwrap() + r.len());
        }
        Self {
            offsets,
            values: rows.concat(),
        }
    }

    /// `S(p, q)` for an edge `(p, q)` of the view.
    pub fn get(&self, view: &View<'_>, p: usize, q: usize) -> f64 {
        let i = view
            .graph
            .neighbors(p)
            .binary_search(&q)
            .expect("excess lookup on a non-edge");
        self.values[self.offsets[p] + i]
    }

    /// `Σ_{r ∈ N(p,q)} S(p, r) S(q, r)`.
    pub fn coupling(&self, view: &View<'_>, p: usize, q: usize) -> f64 {
        view.graph
            .common_neighbors(p, q)
            .into_iter()
            .map(|r| self.get(view, p, r) * self.get(view, q, r))
            .sum()
    }
}

/// Runs `epochs` walks of `steps` moves from every origin and returns the
/// per-node visit totals (view-local). Only moves are counted, not origins.
pub(crate) fn run_fixed_walks(
    view: &View<'_>,
    table: &TransitionTable,
    origins: &[usize],
    epochs: usize,
    steps: usize,
    key: &[u64],
) -> Vec<u64> {
    let per_origin: Vec<Vec<u64>> = origins
        .par_iter()
        .map(|&s| {
            let mut visits = vec![0u64; view.n()];
            for epoch in 0..epochs {
                let mut k = key.to_vec();
                k.extend([view.global(s) as u64, epoch as u64]);
                let mut rng = crate::util::stream_rng(&k);
                let mut p = s;
                for _ in 0..steps {
                    match table.step(view, p, &mut rng) {
                        Some(q) => {
                            visits[q] += 1;
                            p = q;
                        }
                        None => break,
                    }
                }
            }
            visits
        })
        .collect();
    sum_visits(view.n(), per_origin)
}

pub(crate) fn sum_visits(n: usize, parts: Vec<Vec<u64>>) -> Vec<u64> {
    let mut total = vec![0u64; n];
    for part in parts {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    total
}
