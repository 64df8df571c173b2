//! Negative sampling, objectives, the epoch loop, and evaluation.

mod evaluate;
pub mod loss;
pub mod metrics;
mod replay;
mod report;
pub mod sampling;
mod trainer;

use thiserror::Error;

use crate::graph::GraphError;
use crate::model::ModelError;
use crate::numerics::NumericsError;

pub use evaluate::{evaluate, evaluate_cells, score_range, warm_store, CellResult, EvalInputs, Setting};
pub use loss::{loss_lp, loss_pe, total_loss};
pub use metrics::{average_precision, roc_auc};
pub use replay::{apply_commits, batch_commits, replay, static_graph_trace, StaticTrace};
pub use report::{bound_report, BoundReport, EvalReport, MetricCell};
pub use sampling::{NegativeSampler, Strategy};
pub use trainer::{batch_objective, train, train_observed, EarlyStopping, EpochRecord, StopVerdict, TrainOutcome};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("metric: {0}")]
    Metric(String),
    #[error("unknown negative sampling strategy `{0}` (expected random, historical or inductive)")]
    UnknownStrategy(String),
    #[error("unknown evaluation setting `{0}` (expected transductive or inductive)")]
    UnknownSetting(String),
    #[error("no valid negative for node {node} at t = {timestamp}")]
    NoNegative { node: usize, timestamp: f64 },
    #[error("non-finite loss {value} in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, value: f64 },
    #[error("inductive evaluation found no events touching new nodes in {segment}")]
    NoInductiveEvents { segment: &'static str },
}

/// Independent random streams derived from one seed.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
