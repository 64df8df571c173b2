use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::graph::{ChronoSplit, EventStream};
use crate::lpe::drift_bound_check;
use crate::model::ModelParams;

use super::evaluate::{CellResult, Setting};
use super::replay::static_graph_trace;
use super::sampling::Strategy;
use super::trainer::EpochRecord;
use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub setting: Setting,
    pub strategy: Strategy,
    pub ap: f64,
    pub roc_auc: f64,
    pub positives: usize,
    /// Negatives drawn uniformly because the strategy's pool was empty.
    pub negative_fallbacks: u64,
}

impl From<CellResult> for MetricCell {
    fn from(c: CellResult) -> Self {
        Self {
            setting: c.setting,
            strategy: c.strategy,
            ap: c.ap,
            roc_auc: c.roc_auc,
            positives: c.positives,
            negative_fallbacks: c.fallbacks,
        }
    }
}

/// Drift of one node's approximate encoding on a repeated snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub node: usize,
    pub steps: usize,
    pub max_step_diff: f64,
    pub bound: f64,
    pub satisfied: bool,
    pub step_diffs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub seed: u64,
    pub config_hash: String,
    pub shape_hash: String,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub metrics: Vec<MetricCell>,
    pub loss_trace: Vec<EpochRecord>,
    pub bound_check: Option<BoundReport>,
}

impl EvalReport {
    pub fn new(dataset: &str, config: &RunConfig, params: &ModelParams) -> Self {
        Self {
            dataset: dataset.to_string(),
            seed: config.seed,
            config_hash: config.hash(),
            shape_hash: params.shape_hash(),
            best_epoch: 0,
            epochs_run: 0,
            metrics: Vec::new(),
            loss_trace: Vec::new(),
            bound_check: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn cell(&self, setting: Setting, strategy: Strategy) -> Option<&MetricCell> {
        self.metrics
            .iter()
            .find(|c| c.setting == setting && c.strategy == strategy)
    }

    /// `epoch,loss,loss_lp,loss_pe,val_ap,val_roc_auc` rows.
    pub fn loss_trace_csv(&self) -> String {
        let mut out = String::from("epoch,loss,loss_lp,loss_pe,val_ap,val_roc_auc\n");
        for r in &self.loss_trace {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.loss, r.loss_lp, r.loss_pe, r.val_ap, r.val_roc_auc
            ));
        }
        out
    }
}

pub const BOUND_STEPS: usize = 50;

/// Bound check on the first training batch's snapshot, repeated for
/// [`BOUND_STEPS`] steps, tracking its most frequent node.
pub fn bound_report(
    params: &ModelParams,
    stream: &EventStream,
    split: &ChronoSplit,
    config: &RunConfig,
) -> Result<BoundReport, TrainError> {
    let first = 0..config.batch_size.min(split.train_end);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
    for e in &stream.events()[first] {
        let key = (e.src.min(e.dst), e.src.max(e.dst));
        if !edges.contains(&key) {
            edges.push(key);
        }
        *degree.entry(e.src).or_default() += 1;
        *degree.entry(e.dst).or_default() += 1;
    }
    let node = degree
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&u, _)| u)
        .unwrap_or(0);
    let trace = static_graph_trace(
        params,
        &edges,
        stream.num_nodes(),
        BOUND_STEPS,
        node,
        config.pe_init,
        &config.time_encoder(),
        config.t_gap,
    )?;
    let check = drift_bound_check(&trace.approx, &params.lpe)?;
    Ok(BoundReport {
        node,
        steps: BOUND_STEPS,
        max_step_diff: check.max_step_diff,
        bound: check.bound,
        satisfied: check.satisfied,
        step_diffs: check.step_diffs,
    })
}
