use crate::error::{Error, Result};
use crate::graph::{closeness_centrality, eigen_centrality, GraphPartition, Subgraph};
use crate::util::top_k_indices;

use super::context::{View, WalkContext};
use super::walk::{run_fixed_walks, ExcessTable, TransitionTable};
use super::SampleSet;

pub(crate) const TAG_OTS: u64 = 0x4f54_5300;

/// Splits `n_s` picks between the dense and sparse subgraphs in proportion
/// to their sizes; a non-empty dense subgraph always gets at least one.
/// The result sums to `min(n_s, n_dense + n_sparse)`.
pub fn subgraph_quotas(n_dense: usize, n_sparse: usize, n_s: usize) -> (usize, usize) {
    let n = n_dense + n_sparse;
    let n_s = n_s.min(n);
    if n == 0 {
        return (0, 0);
    }
    let mut qd = if n_dense == 0 {
        0
    } else {
        ((n_s as f64 * n_dense as f64 / n as f64).round() as usize).max(1).min(n_dense)
    };
    qd = qd.min(n_s);
    let qs = (n_s - qd).min(n_sparse);
    qd = (n_s - qs).min(n_dense);
    (qd, qs)
}

/// Seeds walks from the most central nodes of each subgraph and keeps the
/// most visited nodes. Returns `min(n_s, n)` distinct nodes, dense picks first.
pub fn one_time_sampling(
    ctx: &WalkContext,
    part: &GraphPartition,
    n_s: usize,
    m_epochs: usize,
) -> Result<SampleSet> {
    if n_s == 0 {
        return Err(Error::Param("n_s must be at least 1".into()));
    }
    if m_epochs == 0 {
        return Err(Error::Param("epochs must be at least 1".into()));
    }
    let covered = part.dense.len() + part.sparse.len();
    if covered != ctx.n() {
        return Err(Error::Shape(format!(
            "partition covers {covered} nodes, graph has {}",
            ctx.n()
        )));
    }
    let (qd, qs) = subgraph_quotas(part.dense.len(), part.sparse.len(), n_s);
    let mut out = SampleSet {
        node_visits: vec![0; ctx.n()],
        ..Default::default()
    };
    sample_subgraph(ctx, &part.dense, qd, n_s, m_epochs, true, &mut out)?;
    sample_subgraph(ctx, &part.sparse, qs, n_s, m_epochs, false, &mut out)?;
    Ok(out)
}

fn sample_subgraph(
    ctx: &WalkContext,
    sub: &Subgraph,
    quota: usize,
    steps: usize,
    epochs: usize,
    dense: bool,
    out: &mut SampleSet,
) -> Result<()> {
    if quota == 0 {
        return Ok(());
    }
    let view = View::of(sub);
    let (seed_scores, table) = if dense {
        let ex = ExcessTable::build(ctx, &view);
        let table = TransitionTable::build(&view, |p, q| {
            let d_q = view.graph.degree(q) as f64;
            ctx.cos(view.global(p), view.global(q)) + ex.coupling(&view, p, q) / (1.0 + d_q.ln())
        });
        (eigen_centrality(&sub.graph)?.values, table)
    } else {
        let table = TransitionTable::build(&view, |p, q| ctx.visit_weight_sparse(&view, p, q));
        (closeness_centrality(&sub.graph), table)
    };
    let seeds = top_k_indices(&seed_scores, quota);
    let sub_id = if dense { 0 } else { 1 };
    let visits = run_fixed_walks(&view, &table, &seeds, epochs, steps, &[ctx.rng_seed, TAG_OTS, sub_id]);
    for (local, &v) in visits.iter().enumerate() {
        out.node_visits[view.global(local)] += v;
    }
    for local in top_k_indices(&visits, quota) {
        out.selected.push(view.global(local));
        out.visits.push(visits[local]);
        out.iteration.push(0);
    }
    Ok(())
}
