//! Generated streams with known structure.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{EventStream, GraphError};

/// Disjoint node pairs, each interacting once per `period` at its own phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicSpec {
    pub num_nodes: usize,
    pub num_events: usize,
    pub period: f64,
    /// Pairs that stay silent until the first `train_events` events are over.
    pub held_out_pairs: usize,
    pub train_events: usize,
    pub d_n: usize,
    pub d_e: usize,
}

impl Default for PeriodicSpec {
    fn default() -> Self {
        Self {
            num_nodes: 20,
            num_events: 2000,
            period: 10.0,
            held_out_pairs: 2,
            train_events: 1400,
            d_n: 172,
            d_e: 172,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PeriodicStream {
    pub stream: EventStream,
    pub pairs: Vec<(usize, usize)>,
    pub held_out_nodes: Vec<usize>,
}

/// Builds the stream. Pair `i` of `P` fires at `(m + i/P) · period`; the
/// held-out pairs use the same law but start only after the regular pairs
/// have produced `train_events + P` events.
pub fn periodic_stream(spec: &PeriodicSpec) -> Result<PeriodicStream, GraphError> {
    let n_pairs = spec.num_nodes / 2;
    if n_pairs == 0 || spec.held_out_pairs >= n_pairs {
        return Err(GraphError::Features(format!(
            "{} nodes cannot hold {} held-out pairs",
            spec.num_nodes, spec.held_out_pairs
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n_pairs).map(|i| (2 * i, 2 * i + 1)).collect();
    let regular = n_pairs - spec.held_out_pairs;
    let phase = |i: usize| i as f64 / n_pairs as f64 * spec.period;
    let rounds = spec.num_events / regular + 2;

    let mut events: Vec<(usize, usize, f64)> = Vec::new();
    for m in 0..rounds {
        for (i, &(a, b)) in pairs[..regular].iter().enumerate() {
            events.push((a, b, m as f64 * spec.period + phase(i)));
        }
    }
    events.sort_by(|x, y| x.2.total_cmp(&y.2));
    let start = events[(spec.train_events + n_pairs).min(events.len() - 1)].2;
    for m in 0..rounds {
        for (i, &(a, b)) in pairs.iter().enumerate().skip(regular) {
            let t = m as f64 * spec.period + phase(i);
            if t > start {
                events.push((a, b, t));
            }
        }
    }
    events.sort_by(|x, y| x.2.total_cmp(&y.2));
    events.truncate(spec.num_events);
    let stream = EventStream::featureless(events, spec.num_nodes, spec.d_n, spec.d_e)?.with_name("periodic");
    let held_out_nodes = pairs[regular..].iter().flat_map(|&(a, b)| [a, b]).collect();
    Ok(PeriodicStream {
        stream,
        pairs,
        held_out_nodes,
    })
}

/// Connected random graph: a shuffled spanning path plus `extra` chords.
pub fn static_graph(num_nodes: usize, extra: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..num_nodes).collect();
    order.shuffle(&mut rng);
    let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
    let mut tries = 0;
    while edges.len() < num_nodes.saturating_sub(1) + extra && tries < 100 * (extra + 1) {
        tries += 1;
        let (a, b) = (rng.gen_range(0..num_nodes), rng.gen_range(0..num_nodes));
        let key = (a.min(b), a.max(b));
        if a != b && !edges.contains(&key) {
            edges.push(key);
        }
    }
    edges
}

/// `num_events` uniform random interactions at unit spacing.
pub fn random_stream(num_nodes: usize, num_events: usize, d_n: usize, d_e: usize, seed: u64) -> Result<EventStream, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = (0..num_events)
        .map(|i| {
            let a = rng.gen_range(0..num_nodes);
            let mut b = rng.gen_range(0..num_nodes - 1);
            if b >= a {
                b += 1;
            }
            (a, b, i as f64)
        })
        .collect();
    EventStream::featureless(raw, num_nodes, d_n, d_e)
}
