use std::ops::Range;

use crate::numerics::Tensor;

use super::GraphError;

/// Neighbor id and event index carried by padding entries.
pub const PADDING: usize = usize::MAX;

/// One interaction `(src, dst, timestamp)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemporalEvent {
    pub src: usize,
    pub dst: usize,
    pub timestamp: f64,
    /// Row of the edge-feature table. After construction this equals the
    /// event's own index.
    pub edge_feature_row: usize,
}

/// Entry of a node's chronological interaction list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborEntry {
    pub neighbor: usize,
    pub timestamp: f64,
    pub event_index: usize,
}

impl NeighborEntry {
    pub fn padding(t: f64) -> Self {
        Self {
            neighbor: PADDING,
            timestamp: t,
            event_index: PADDING,
        }
    }

    pub fn is_padding(&self) -> bool {
        self.neighbor == PADDING
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StreamMetadata {
    pub name: String,
    /// Pairs of input rows that were out of time order and got reordered.
    pub inversions_repaired: u64,
}

/// Time-sorted interactions with feature tables and a per-node neighbor index.
///
/// Immutable once built.
#[derive(Clone, Debug)]
pub struct EventStream {
    events: Vec<TemporalEvent>,
    node_features: Tensor,
    edge_features: Tensor,
    neighbor_index: Vec<Vec<NeighborEntry>>,
    pub metadata: StreamMetadata,
}

impl EventStream {
    /// Builds a stream from raw `(src, dst, timestamp)` triples.
    ///
    /// Events are stably sorted by timestamp; `edge_features` rows (one per
    /// input triple, in input order) are permuted along with them.
    pub fn new(
        raw: Vec<(usize, usize, f64)>,
        node_features: Tensor,
        edge_features: Tensor,
    ) -> Result<Self, GraphError> {
        if raw.is_empty() {
            return Err(GraphError::Empty);
        }
        let num_nodes = node_features.rows();
        if node_features.rank() != 2 || !node_features.is_finite() {
            return Err(GraphError::Features("node features must be a finite matrix".into()));
        }
        if edge_features.rank() != 2 || edge_features.rows() != raw.len() || !edge_features.is_finite() {
            return Err(GraphError::Features(format!(
                "edge features must be a finite {} × d_E matrix, got {:?}",
                raw.len(),
                edge_features.shape()
            )));
        }
        for (i, &(s, d, t)) in raw.iter().enumerate() {
            if s >= num_nodes || d >= num_nodes {
                return Err(GraphError::InvalidNode {
                    event: i,
                    node: s.max(d),
                    num_nodes,
                });
            }
            if !t.is_finite() || t < 0.0 {
                return Err(GraphError::BadTimestamp { event: i, value: t });
            }
        }

        let times: Vec<f64> = raw.iter().map(|e| e.2).collect();
        let (order, inversions) = stable_sort_counting_inversions(&times);

        let d_e = edge_features.cols();
        let mut edge_data = Vec::with_capacity(raw.len() * d_e);
        let mut events = Vec::with_capacity(raw.len());
        for (new_idx, &old_idx) in order.iter().enumerate() {
            let (src, dst, timestamp) = raw[old_idx];
            events.push(TemporalEvent {
                src,
                dst,
                timestamp,
                edge_feature_row: new_idx,
            });
            edge_data.extend_from_slice(edge_features.row(old_idx));
        }
        let edge_features = Tensor::matrix(raw.len(), d_e, edge_data).expect("same size");

        let mut neighbor_index = vec![Vec::new(); num_nodes];
        for (i, e) in events.iter().enumerate() {
            neighbor_index[e.src].push(NeighborEntry {
                neighbor: e.dst,
                timestamp: e.timestamp,
                event_index: i,
            });
            if e.dst != e.src {
                neighbor_index[e.dst].push(NeighborEntry {
                    neighbor: e.src,
                    timestamp: e.timestamp,
                    event_index: i,
                });
            }
        }

        Ok(Self {
            events,
            node_features,
            edge_features,
            neighbor_index,
            metadata: StreamMetadata {
                name: String::new(),
                inversions_repaired: inversions,
            },
        })
    }

    /// Featureless stream: zero node features of width `d_n`, zero edge
    /// features of width `d_e`.
    pub fn featureless(
        raw: Vec<(usize, usize, f64)>,
        num_nodes: usize,
        d_n: usize,
        d_e: usize,
    ) -> Result<Self, GraphError> {
        let n_events = raw.len();
        Self::new(
            raw,
            Tensor::zeros(&[num_nodes, d_n]),
            Tensor::zeros(&[n_events, d_e]),
        )
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.metadata.name = name.into();
        self
    }

    pub fn events(&self) -> &[TemporalEvent] {
        &self.events
    }

    pub fn num_events(&self) -> usize {
        self.events.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_features.rows()
    }

    pub fn node_dim(&self) -> usize {
        self.node_features.cols()
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_features.cols()
    }

    pub fn node_features(&self) -> &Tensor {
        &self.node_features
    }

    pub fn edge_features(&self) -> &Tensor {
        &self.edge_features
    }

    pub fn node_feature(&self, u: usize) -> &[f64] {
        self.node_features.row(u)
    }

    pub fn edge_feature(&self, event_index: usize) -> &[f64] {
        self.edge_features.row(event_index)
    }

    pub fn neighbors(&self, u: usize) -> &[NeighborEntry] {
        &self.neighbor_index[u]
    }

    /// The `k` latest interactions of `u` strictly before `t`, oldest first,
    /// front-padded to length `k`.
    pub fn recent_interactions(&self, u: usize, t: f64, k: usize) -> Vec<NeighborEntry> {
        let list = &self.neighbor_index[u];
        let end = list.partition_point(|e| e.timestamp < t);
        padded_tail(&list[..end], t, k)
    }

    /// Like [`Self::recent_interactions`] but includes interactions at `t`.
    pub fn recent_interactions_inclusive(&self, u: usize, t: f64, k: usize) -> Vec<NeighborEntry> {
        let list = &self.neighbor_index[u];
        let end = list.partition_point(|e| e.timestamp <= t);
        padded_tail(&list[..end], t, k)
    }

    /// Interactions of `u` with `t − t_gap ≤ timestamp < t`.
    pub fn window_neighbors(&self, u: usize, t: f64, t_gap: f64) -> &[NeighborEntry] {
        let list = &self.neighbor_index[u];
        let end = list.partition_point(|e| e.timestamp < t);
        let start = list[..end].partition_point(|e| e.timestamp < t - t_gap);
        &list[start..end]
    }

    /// Consecutive batches of at most `batch_size` events over `range`.
    pub fn batches(&self, range: Range<usize>, batch_size: usize) -> BatchIter {
        batch_iter(range, batch_size)
    }
}

fn padded_tail(history: &[NeighborEntry], t: f64, k: usize) -> Vec<NeighborEntry> {
    let take = history.len().min(k);
    let mut out = Vec::with_capacity(k);
    out.extend(std::iter::repeat_n(NeighborEntry::padding(t), k - take));
    out.extend_from_slice(&history[history.len() - take..]);
    out
}

/// Stable merge sort of indices by key, counting inverted pairs.
fn stable_sort_counting_inversions(keys: &[f64]) -> (Vec<usize>, u64) {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    let mut buf = idx.clone();
    let inversions = merge_count(keys, &mut idx, &mut buf);
    (idx, inversions)
}

fn merge_count(keys: &[f64], idx: &mut [usize], buf: &mut [usize]) -> u64 {
    let n = idx.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (l, r) = idx.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(keys, l, bl) + merge_count(keys, r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if keys[idx[j]] < keys[idx[i]] {
            buf[k] = idx[j];
            count += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = idx[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&idx[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&idx[j..n]);
    idx.copy_from_slice(&buf[..n]);
    count
}

/// Iterator over batch ranges; see [`batch_iter`].
#[derive(Clone, Debug)]
pub struct BatchIter {
    next: usize,
    end: usize,
    size: usize,
}

impl Iterator for BatchIter {
    type Item = Range<usize>;

    fn next(&mut self) -> Option<Range<usize>> {
        if self.next >= self.end {
            return None;
        }
        let start = self.next;
        self.next = (start + self.size).min(self.end);
        Some(start..self.next)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end.saturating_sub(self.next)).div_ceil(self.size);
        (n, Some(n))
    }
}

impl ExactSizeIterator for BatchIter {}

/// `⌈span / batch_size⌉` consecutive ranges covering `range`; the last may
/// be short.
pub fn batch_iter(range: Range<usize>, batch_size: usize) -> BatchIter {
    assert!(batch_size >= 1, "batch size must be positive");
    BatchIter {
        next: range.start,
        end: range.end,
        size: batch_size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny() -> EventStream {
        EventStream::featureless(vec![(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)], 3, 2, 2).unwrap()
    }

    #[test]
    fn neighbor_index_transcription() {
        let s = tiny();
        assert_eq!(s.num_nodes(), 3);
        assert_eq!(s.num_events(), 3);
        let n1: Vec<_> = s
            .neighbors(1)
            .iter()
            .map(|e| (e.neighbor, e.timestamp, e.event_index))
            .collect();
        assert_eq!(n1, vec![(0, 1.0, 0), (2, 2.0, 1)]);
    }

    #[test]
    fn unsorted_input_matches_sorted() {
        let sorted = tiny();
        let s = EventStream::featureless(vec![(0, 2, 3.0), (0, 1, 1.0), (1, 2, 2.0)], 3, 2, 2).unwrap();
        assert_eq!(s.events(), sorted.events());
        assert_eq!(s.metadata.inversions_repaired, 2);
        assert_eq!(sorted.metadata.inversions_repaired, 0);
    }

    #[test]
    fn ties_keep_input_order_and_features_follow() {
        let edges = Tensor::matrix(3, 1, vec![10.0, 20.0, 30.0]).unwrap();
        let s = EventStream::new(
            vec![(0, 1, 5.0), (1, 2, 1.0), (2, 0, 5.0)],
            Tensor::zeros(&[3, 1]),
            edges,
        )
        .unwrap();
        assert_eq!((s.events()[1].src, s.events()[2].src), (0, 2));
        assert_eq!(s.edge_feature(0), &[20.0]);
        assert_eq!(s.edge_feature(2), &[30.0]);
    }

    #[test]
    fn self_loops_index_once() {
        let s = EventStream::featureless(vec![(0, 0, 1.0), (0, 1, 2.0)], 2, 1, 1).unwrap();
        assert_eq!(s.neighbors(0).len(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            EventStream::featureless(vec![], 2, 1, 1),
            Err(GraphError::Empty)
        ));
        assert!(EventStream::featureless(vec![(0, 5, 1.0)], 2, 1, 1).is_err());
        assert!(EventStream::featureless(vec![(0, 1, -1.0)], 2, 1, 1).is_err());
        assert!(EventStream::featureless(vec![(0, 1, f64::NAN)], 2, 1, 1).is_err());
    }

    #[test]
    fn strict_recent_interactions() {
        let s = EventStream::featureless(vec![(0, 1, 1.0), (0, 2, 2.0), (0, 3, 3.0)], 4, 1, 1).unwrap();
        let r = s.recent_interactions(0, 2.5, 2);
        assert_eq!(r.iter().map(|e| e.timestamp).collect::<Vec<_>>(), vec![1.0, 2.0]);
        let empty = s.recent_interactions(0, 0.5, 3);
        assert!(empty.iter().all(|e| e.is_padding() && e.timestamp == 0.5));
        assert_eq!(empty.len(), 3);
    }

    #[test]
    fn full_window_in_order() {
        let raw: Vec<_> = (0..5).map(|i| (0, 1, i as f64)).collect();
        let s = EventStream::featureless(raw, 2, 1, 1).unwrap();
        let r = s.recent_interactions(0, 10.0, 5);
        assert_eq!(r.iter().map(|e| e.event_index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn inclusive_contrast() {
        let s = EventStream::featureless(vec![(0, 1, 1.0), (0, 2, 2.0)], 3, 1, 1).unwrap();
        let inc = s.recent_interactions_inclusive(0, 2.0, 2);
        assert_eq!(inc.iter().map(|e| e.timestamp).collect::<Vec<_>>(), vec![1.0, 2.0]);
        let strict = s.recent_interactions(0, 2.0, 2);
        assert!(strict[0].is_padding());
        assert_eq!(strict[1].timestamp, 1.0);
        assert!(s.recent_interactions_inclusive(0, 0.0, 2).iter().all(|e| e.is_padding()));
    }

    #[test]
    fn window_is_half_open() {
        let s = EventStream::featureless(vec![(0, 1, 1.0), (0, 2, 5.0), (0, 3, 9.0)], 4, 1, 1).unwrap();
        let w: Vec<_> = s.window_neighbors(0, 10.0, 6.0).iter().map(|e| e.timestamp).collect();
        assert_eq!(w, vec![5.0, 9.0]);
        assert!(s.window_neighbors(0, 1.0, 100.0).is_empty());
        assert_eq!(s.window_neighbors(0, 10.0, 1000.0).len(), 3);
        // lower bound is closed
        assert_eq!(s.window_neighbors(0, 9.0, 4.0).len(), 1);
    }

    #[test]
    fn batch_sizes() {
        let sizes: Vec<_> = batch_iter(0..10, 4).map(|r| r.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert_eq!(batch_iter(5..5, 3).count(), 0);
        assert_eq!(batch_iter(0..1000, 200).len(), 5);
        assert!(batch_iter(70..100, 8).all(|r| r.start >= 70));
    }

    fn brute_recent(s: &EventStream, u: usize, t: f64, k: usize, inclusive: bool) -> Vec<NeighborEntry> {
        let mut hits: Vec<NeighborEntry> = Vec::new();
        for (i, e) in s.events().iter().enumerate() {
            let before = if inclusive { e.timestamp <= t } else { e.timestamp < t };
            if !before {
                continue;
            }
            if e.src == u {
                hits.push(NeighborEntry { neighbor: e.dst, timestamp: e.timestamp, event_index: i });
            } else if e.dst == u {
                hits.push(NeighborEntry { neighbor: e.src, timestamp: e.timestamp, event_index: i });
            }
        }
        let keep = hits.split_off(hits.len().saturating_sub(k));
        let mut out = vec![NeighborEntry::padding(t); k - keep.len()];
        out.extend(keep);
        out
    }

    proptest! {
        #[test]
        fn recent_matches_scan(
            raw in proptest::collection::vec((0usize..6, 0usize..6, 0u32..20), 1..60),
            u in 0usize..6,
            t in 0u32..22,
            k in 1usize..6,
        ) {
            let raw: Vec<_> = raw.into_iter().map(|(a, b, t)| (a, b, f64::from(t))).collect();
            let n = raw.len();
            let s = EventStream::featureless(raw.clone(), 6, 1, 1).unwrap();
            for w in s.events().windows(2) {
                prop_assert!(w[0].timestamp <= w[1].timestamp);
            }
            for node in 0..6 {
                let count = raw.iter().filter(|e| e.0 == node || e.1 == node).count();
                prop_assert_eq!(s.neighbors(node).len(), count);
            }
            let t = f64::from(t);
            prop_assert_eq!(s.recent_interactions(u, t, k), brute_recent(&s, u, t, k, false));
            prop_assert_eq!(s.recent_interactions_inclusive(u, t, k), brute_recent(&s, u, t, k, true));
            let brute_inv = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| raw[i].2 > raw[j].2).count() as u64;
            prop_assert_eq!(s.metadata.inversions_repaired, brute_inv);
        }
    }
}
