use std::collections::BTreeSet;

use super::{EventStream, GraphError};

/// Chronological train/validation/test boundaries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChronoSplit {
    /// Events `[0, train_end)` are training events.
    pub train_end: usize,
    /// Events `[train_end, val_end)` are validation events; the rest test.
    pub val_end: usize,
    pub num_events: usize,
    /// Nodes with no incident training event.
    pub new_nodes: BTreeSet<usize>,
}

impl ChronoSplit {
    pub fn train(&self) -> std::ops::Range<usize> {
        0..self.train_end
    }

    pub fn val(&self) -> std::ops::Range<usize> {
        self.train_end..self.val_end
    }

    pub fn test(&self) -> std::ops::Range<usize> {
        self.val_end..self.num_events
    }

    pub fn is_new(&self, u: usize) -> bool {
        self.new_nodes.contains(&u)
    }
}

pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.70, 0.15, 0.15);

/// Splits by event order: `train_end = ⌊train·n⌋`, `val_end = ⌊(train+val)·n⌋`.
pub fn chronological_split(
    stream: &EventStream,
    ratios: (f64, f64, f64),
) -> Result<ChronoSplit, GraphError> {
    let n = stream.num_events();
    if n < 3 {
        return Err(GraphError::Split(format!("need at least 3 events, got {n}")));
    }
    let (tr, va, te) = ratios;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(GraphError::Split(format!(
            "ratios must be positive and sum to 1, got ({tr}, {va}, {te})"
        )));
    }
    // The nudge keeps products such as 0.85 × 100 from flooring to 84.
    let cut = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let train_end = cut(tr).min(n);
    let val_end = cut(tr + va).clamp(train_end, n);
    if train_end == 0 {
        return Err(GraphError::Split("training segment is empty".into()));
    }
    let mut seen = vec![false; stream.num_nodes()];
    for e in &stream.events()[..train_end] {
        seen[e.src] = true;
        seen[e.dst] = true;
    }
    let new_nodes = seen
        .iter()
        .enumerate()
        .filter(|(_, &s)| !s)
        .map(|(u, _)| u)
        .collect();
    Ok(ChronoSplit {
        train_end,
        val_end,
        num_events: n,
        new_nodes,
    })
}
