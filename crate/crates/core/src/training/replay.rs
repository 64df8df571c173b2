//! Positional-store commits and commit-only replays.

use std::collections::HashMap;
use std::ops::Range;

use crate::encoder::{Forward, ForwardInputs};
use crate::graph::{EventStream, TemporalEvent, TimeEncoder};
use crate::lpe::{neighbor_context, PeMlp, PositionalStore};
use crate::model::{ModelError, ModelParams};
use crate::pe_init::{InitialPe, PeInitMethod};

/// Encodings to commit after a batch: each touched node in order of first
/// appearance, updated at its last timestamp in the batch from the
/// batch-start approximations of itself and its inclusive recent neighbors.
pub fn batch_commits(
    fwd: &mut Forward<'_>,
    mlp: &PeMlp,
    stream: &EventStream,
    events: &[TemporalEvent],
    k: usize,
    time: &TimeEncoder,
) -> Result<Vec<(usize, Vec<f64>)>, ModelError> {
    let mut order = Vec::new();
    let mut last_t: HashMap<usize, f64> = HashMap::new();
    for e in events {
        for u in [e.src, e.dst] {
            if last_t.insert(u, e.timestamp).is_none() {
                order.push(u);
            }
        }
    }
    let mut out = Vec::with_capacity(order.len());
    for u in order {
        let t = last_t[&u];
        let p_u = fwd.approx_pe_value(u)?;
        let mut neighbors = Vec::new();
        for e in stream.recent_interactions_inclusive(u, t, k) {
            if !e.is_padding() {
                neighbors.push((fwd.approx_pe_value(e.neighbor)?, t - e.timestamp));
            }
        }
        let refs: Vec<(&[f64], f64)> = neighbors.iter().map(|(p, d)| (p.as_slice(), *d)).collect();
        let q = neighbor_context(&refs, p_u.len(), time)?;
        out.push((u, mlp.apply(&p_u, &q)));
    }
    Ok(out)
}

/// Opens the next store step and writes `commits` to it.
pub fn apply_commits(store: &mut PositionalStore, commits: Vec<(usize, Vec<f64>)>) -> Result<(), ModelError> {
    store.begin_step();
    for (u, pe) in commits {
        store.commit(u, pe)?;
    }
    Ok(())
}

/// Commits every batch of `range` in order without scoring.
pub fn replay(
    params: &ModelParams,
    stream: &EventStream,
    store: &mut PositionalStore,
    range: Range<usize>,
    batch_size: usize,
    time: &TimeEncoder,
    t_gap: f64,
) -> Result<(), ModelError> {
    for batch in stream.batches(range, batch_size) {
        let commits = {
            let inputs = ForwardInputs {
                stream,
                store,
                time,
                t_gap,
            };
            let mut fwd = Forward::new(params, inputs, false)?;
            batch_commits(&mut fwd, &params.lpe.mlp, stream, &stream.events()[batch], params.dims.k, time)?
        };
        apply_commits(store, commits)?;
    }
    Ok(())
}

/// Encodings of one node while a static edge set repeats once per step.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticTrace {
    /// Approximation at the start of each step.
    pub approx: Vec<Vec<f64>>,
    /// Value committed at the end of each step.
    pub committed: Vec<Vec<f64>>,
}

/// Replays `edges` at timestamps `0, 1, …, steps − 1`, one batch per step,
/// starting from an initial encoding of the edge set.
pub fn static_graph_trace(
    params: &ModelParams,
    edges: &[(usize, usize)],
    num_nodes: usize,
    steps: usize,
    node: usize,
    init: PeInitMethod,
    time: &TimeEncoder,
    t_gap: f64,
) -> Result<StaticTrace, ModelError> {
    let dims = params.dims;
    let raw: Vec<_> = (0..steps)
        .flat_map(|s| edges.iter().map(move |&(a, b)| (a, b, s as f64)))
        .collect();
    let stream = EventStream::featureless(raw, num_nodes, dims.d_n, dims.d_e)?;
    let init = InitialPe::build(init, edges, num_nodes, dims.d_p)?;
    let mut store = PositionalStore::new(num_nodes, dims.l, dims.d_p);
    store.reset(Some(&init));
    let mut trace = StaticTrace {
        approx: Vec::with_capacity(steps),
        committed: Vec::with_capacity(steps),
    };
    for batch in stream.batches(0..stream.num_events(), edges.len().max(1)) {
        let (p, commits) = {
            let inputs = ForwardInputs {
                stream: &stream,
                store: &store,
                time,
                t_gap,
            };
            let mut fwd = Forward::new(params, inputs, false)?;
            let p = fwd.approx_pe_value(node)?;
            let commits = batch_commits(&mut fwd, &params.lpe.mlp, &stream, &stream.events()[batch], dims.k, time)?;
            (p, commits)
        };
        trace.approx.push(p);
        if let Some((_, pe)) = commits.iter().find(|(u, _)| *u == node) {
            trace.committed.push(pe.clone());
        }
        apply_commits(&mut store, commits)?;
    }
    Ok(trace)
}
