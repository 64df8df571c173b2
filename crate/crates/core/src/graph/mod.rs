//! Event streams, ingestion, chronological splits, batching, and the fixed
//! time encoder.

pub mod io;
pub mod split;
pub mod stream;
pub mod time;

pub use io::{load_events, load_with_manifest, write_normalized, DatasetFormat, LoadOptions, Manifest};
pub use split::{chronological_split, ChronoSplit, DEFAULT_RATIOS};
pub use stream::{batch_iter, EventStream, NeighborEntry, StreamMetadata, TemporalEvent, PADDING};
pub use time::TimeEncoder;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no events")]
    Empty,
    #[error("unknown dataset format `{0}`")]
    UnknownFormat(String),
    #[error("event {event} references node {node} but there are {num_nodes} nodes")]
    InvalidNode {
        event: usize,
        node: usize,
        num_nodes: usize,
    },
    #[error("event {event} has invalid timestamp {value}")]
    BadTimestamp { event: usize, value: f64 },
    #[error("{0}")]
    Features(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("split: {0}")]
    Split(String),
    #[error("time delta must be finite and non-negative, got {0}")]
    NegativeDelta(f64),
}
