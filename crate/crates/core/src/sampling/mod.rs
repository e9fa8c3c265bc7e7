//! Random-walk sampling of representative nodes from the data graph.
//!
//! [`one_time_sampling`] seeds walks from the most central nodes of the
//! dense and sparse subgraphs and keeps the most visited nodes.
//! [`incremental_sampling`] repeats batches guided by an informativeness
//! score until the normalised cumulative score stops changing.
//!
//! Node indices are local to the [`View`] a function is given; features and
//! densities are always looked up through the view's parent-graph index.

mod context;
mod incremental;
mod one_time;
mod walk;

pub use context::{minmax_scale, MinMax, View, WalkContext};
pub use incremental::{
    incremental_sampling, informativeness_score, stop_criterion, tendency_weight, IScoreVector,
    IncrementalOutcome, TendencyMode,
};
pub use one_time::{one_time_sampling, subgraph_quotas};
pub use walk::{rw_step, transition_probabilities};

use std::path::Path;

use crate::error::{Error, Result};

/// Hard cap on the length of a single budget-limited walk.
pub const MAX_WALK_STEPS: usize = 10_000;
/// Floor applied to step costs so every budget is exhausted in finitely many steps.
pub const MIN_STEP_COST: f64 = 1e-6;

/// Selected nodes in selection order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SampleSet {
    /// Parent-graph node indices.
    pub selected: Vec<usize>,
    /// Visit count each node had when it was selected.
    pub visits: Vec<u64>,
    /// Batch that selected each node (0 for one-time sampling).
    pub iteration: Vec<usize>,
    /// Walk visits of every node of the parent graph, accumulated over all walks.
    pub node_visits: Vec<u64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.selected.contains(&node)
    }
}

pub const PICKS_HEADER: &str = "rank,id,visits,iteration";

pub fn format_picks(set: &SampleSet, ids: &[String]) -> Result<String> {
    let mut out = String::from(PICKS_HEADER);
    out.push('\n');
    for (rank, ((&node, &visits), &it)) in set
        .selected
        .iter()
        .zip(&set.visits)
        .zip(&set.iteration)
        .enumerate()
    {
        let id = ids
            .get(node)
            .ok_or_else(|| Error::Shape(format!("no id for node {node}")))?;
        out.push_str(&format!("{},{},{},{}\n", rank + 1, id, visits, it));
    }
    Ok(out)
}

pub fn write_picks(set: &SampleSet, ids: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_picks(set, ids)?).map_err(|e| Error::io(path, e))
}
