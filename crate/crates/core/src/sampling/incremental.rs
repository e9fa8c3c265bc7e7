use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::GraphPartition;

use super::context::{View, WalkContext};
use super::one_time::one_time_sampling;
use super::walk::{run_fixed_walks, sum_visits, ExcessTable, TransitionTable};
use super::{SampleSet, MAX_WALK_STEPS};

const TAG_INFO: u64 = 0x4953_0000;
const TAG_INS: u64 = 0x494e_5300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TendencyMode {
    Dense,
    Sparse,
}

/// Per-node informativeness of the latest batch and its running total.
#[derive(Debug, Clone, PartialEq)]
pub struct IScoreVector {
    pub i: Vec<f64>,
    pub i_cumulative: Vec<f64>,
}

impl IScoreVector {
    pub fn zeros(n: usize) -> Self {
        Self {
            i: vec![0.0; n],
            i_cumulative: vec![0.0; n],
        }
    }
}

/// `Î_{p,q} = I_C(q) / Σ_{t ∈ N(p,q)} I_C(t)`, `None` when `N(p,q)` is empty.
fn tendency_factor(common: &[usize], i_cum: &[f64], q: usize) -> Option<f64> {
    if common.is_empty() {
        return None;
    }
    let denom: f64 = common.iter().map(|&t| i_cum[t]).sum();
    Some(if denom > 0.0 {
        i_cum[q] / denom
    } else {
        1.0 / common.len() as f64
    })
}

/// Informativeness-weighted visiting weight on the full graph.
pub fn tendency_weight(ctx: &WalkContext, p: usize, q: usize, i_cum: &[f64], mode: TendencyMode) -> f64 {
    let view = ctx.full_view();
    let common = ctx.graph.common_neighbors(p, q);
    let factor = tendency_factor(&common, i_cum, q);
    match mode {
        TendencyMode::Dense => {
            let coupling: f64 = common
                .iter()
                .map(|&t| ctx.similarity_excess(&view, p, t) * ctx.similarity_excess(&view, q, t))
                .sum();
            ctx.cos(p, q) + factor.unwrap_or(0.0) * coupling
        }
        TendencyMode::Sparse => factor.unwrap_or(1.0) * ctx.scaled_gap(p, q),
    }
}

fn tendency_cached(
    ctx: &WalkContext,
    view: &View<'_>,
    ex: &ExcessTable,
    p: usize,
    q: usize,
    i_cum: &[f64],
    mode: TendencyMode,
) -> f64 {
    let common = ctx.graph.common_neighbors(p, q);
    let factor = tendency_factor(&common, i_cum, q);
    match mode {
        TendencyMode::Dense => ctx.cos(p, q) + factor.unwrap_or(0.0) * ex.coupling(view, p, q),
        TendencyMode::Sparse => factor.unwrap_or(1.0) * ctx.scaled_gap(p, q),
    }
}

/// Budget-limited walks from every selected node. Each walk starts with
/// budget `k` (the graph's k-NN parameter), counts its origin and every node
/// it moves to, and stops once the accumulated step cost exceeds the budget.
/// The returned vector's cumulative part is `prev.i_cumulative + i`.
pub fn informativeness_score(
    ctx: &WalkContext,
    modes: &[TendencyMode],
    selected: &[usize],
    prev: &IScoreVector,
    m_epochs: usize,
) -> Result<IScoreVector> {
    let view = ctx.full_view();
    let ex = ExcessTable::build(ctx, &view);
    informativeness_with(ctx, &ex, modes, selected, prev, m_epochs, 0)
}

fn informativeness_with(
    ctx: &WalkContext,
    ex: &ExcessTable,
    modes: &[TendencyMode],
    selected: &[usize],
    prev: &IScoreVector,
    m_epochs: usize,
    batch: u64,
) -> Result<IScoreVector> {
    let n = ctx.n();
    if selected.is_empty() {
        return Err(Error::Empty("informativeness needs at least one selected node".into()));
    }
    if modes.len() != n || prev.i_cumulative.len() != n {
        return Err(Error::Shape(format!(
            "{} modes and {} cumulative scores for {n} nodes",
            modes.len(),
            prev.i_cumulative.len()
        )));
    }
    if let Some(&bad) = selected.iter().find(|&&s| s >= n) {
        return Err(Error::Shape(format!("selected node {bad} out of range for {n} nodes")));
    }
    let view = ctx.full_view();
    let i_cum = &prev.i_cumulative;
    let table = TransitionTable::build(&view, |p, q| tendency_cached(ctx, &view, ex, p, q, i_cum, modes[p]));
    let budget = ctx.graph.k_nn as f64;
    let parts: Vec<(Vec<u64>, usize)> = selected
        .par_iter()
        .map(|&s| {
            let mut visits = vec![0u64; n];
            let mut capped = 0;
            for epoch in 0..m_epochs {
                let mut rng = crate::util::stream_rng(&[ctx.rng_seed, TAG_INFO, batch, s as u64, epoch as u64]);
                visits[s] += 1;
                let mut p = s;
                let mut b = budget;
                let mut steps = 0;
                while b >= 0.0 {
                    if steps == MAX_WALK_STEPS {
                        capped += 1;
                        break;
                    }
                    let Some(q) = table.step(&view, p, &mut rng) else { break };
                    visits[q] += 1;
                    b -= ctx.step_cost(p, q);
                    p = q;
                    steps += 1;
                }
            }
            (visits, capped)
        })
        .collect();
    let capped: usize = parts.iter().map(|(_, c)| c).sum();
    if capped > 0 {
        log::warn!("{capped} informativeness walks stopped at the {MAX_WALK_STEPS}-step cap");
    }
    let visits = sum_visits(n, parts.into_iter().map(|(v, _)| v).collect());
    let i: Vec<f64> = visits.iter().map(|&v| v as f64).collect();
    let i_cumulative = i.iter().zip(i_cum).map(|(a, b)| a + b).collect();
    Ok(IScoreVector { i, i_cumulative })
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        v.iter().map(|x| x / max).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// `−Σ_k |Ī_now(k) − Ī_prev(k)| · log₂(Ī_prev(k) + ρ)` with `Ī = I_C / max I_C`.
pub fn stop_criterion(i_cum_now: &[f64], i_cum_prev: &[f64], rho: f64) -> f64 {
    let now = normalized(i_cum_now);
    let prev = normalized(i_cum_prev);
    let mut l = 0.0;
    for (a, b) in now.iter().zip(&prev) {
        let d = (a - b).abs();
        if d != 0.0 {
            l -= d * (b + rho).log2();
        }
    }
    l
}

#[derive(Debug, Clone)]
pub struct IncrementalOutcome {
    pub samples: SampleSet,
    pub i_score: IScoreVector,
    /// Stop-criterion value after each batch.
    pub losses: Vec<f64>,
}

impl IncrementalOutcome {
    pub fn batches(&self) -> usize {
        self.losses.len()
    }
}

/// Batch 0 is one-time sampling; every later batch walks from the current
/// selection with informativeness-weighted transitions and adds the most
/// visited unselected nodes. Stops when the stop criterion is no longer
/// positive or every node is selected.
pub fn incremental_sampling(
    ctx: &WalkContext,
    part: &GraphPartition,
    n_s: usize,
    m_epochs: usize,
) -> Result<IncrementalOutcome> {
    let n = ctx.n();
    let mut samples = one_time_sampling(ctx, part, n_s, m_epochs)?;
    let modes = ctx.modes(part);
    let view = ctx.full_view();
    let ex = ExcessTable::build(ctx, &view);
    let mut score = IScoreVector::zeros(n);
    let mut losses = Vec::new();
    let mut selected = vec![false; n];
    for &s in &samples.selected {
        selected[s] = true;
    }
    let mut batch = 0u64;
    loop {
        let next = informativeness_with(ctx, &ex, &modes, &samples.selected, &score, m_epochs, batch)?;
        let rho = samples.len() as f64 / n as f64;
        let l = stop_criterion(&next.i_cumulative, &score.i_cumulative, rho);
        log::debug!("batch {batch}: {} selected, L = {l}", samples.len());
        losses.push(l);
        score = next;
        if !(l > 0.0) || samples.len() >= n {
            break;
        }
        batch += 1;
        let i_cum = &score.i_cumulative;
        let table = TransitionTable::build(&view, |p, q| tendency_cached(ctx, &view, &ex, p, q, i_cum, modes[p]));
        let visits = run_fixed_walks(&view, &table, &samples.selected, m_epochs, n_s, &[ctx.rng_seed, TAG_INS, batch]);
        for (t, v) in samples.node_visits.iter_mut().zip(&visits) {
            *t += v;
        }
        let mut candidates: Vec<usize> = (0..n).filter(|&p| !selected[p]).collect();
        // most visited first; unvisited nodes by least accumulated informativeness
        candidates.sort_by(|&a, &b| {
            visits[b]
                .cmp(&visits[a])
                .then(i_cum[a].total_cmp(&i_cum[b]))
                .then(a.cmp(&b))
        });
        candidates.truncate(n_s);
        for p in candidates {
            selected[p] = true;
            samples.selected.push(p);
            samples.visits.push(visits[p]);
            samples.iteration.push(batch as usize);
        }
    }
    Ok(IncrementalOutcome {
        samples,
        i_score: score,
        losses,
    })
}
