use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::encoder::{Forward, ForwardInputs};
use crate::graph::{ChronoSplit, EventStream, TimeEncoder};
use crate::lpe::PositionalStore;
use crate::model::ModelParams;
use crate::pe_init::InitialPe;

use super::replay::{apply_commits, batch_commits, replay};
use super::sampling::{NegativeSampler, Strategy};
use super::{average_precision, roc_auc, seeded_rng, TrainError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Transductive,
    Inductive,
}

impl Setting {
    pub const ALL: [Setting; 2] = [Setting::Transductive, Setting::Inductive];

    pub fn as_str(&self) -> &'static str {
        match self {
            Setting::Transductive => "transductive",
            Setting::Inductive => "inductive",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "transductive" | "trans" => Ok(Setting::Transductive),
            "inductive" | "ind" => Ok(Setting::Inductive),
            _ => Err(TrainError::UnknownSetting(s.to_string())),
        }
    }
}

/// Everything evaluation reads.
#[derive(Clone, Copy)]
pub struct EvalInputs<'a> {
    pub params: &'a ModelParams,
    pub init_pe: &'a InitialPe,
    pub stream: &'a EventStream,
    pub split: &'a ChronoSplit,
    pub config: &'a RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub setting: Setting,
    pub strategy: Strategy,
    pub ap: f64,
    pub roc_auc: f64,
    pub positives: usize,
    pub fallbacks: u64,
}

/// A store reset to the initial encodings and replayed over `[0, upto)`.
pub fn warm_store(inputs: EvalInputs<'_>, upto: usize) -> Result<PositionalStore, TrainError> {
    let dims = inputs.params.dims;
    let mut store = PositionalStore::new(inputs.stream.num_nodes(), dims.l, dims.d_p);
    store.reset(Some(inputs.init_pe));
    replay(
        inputs.params,
        inputs.stream,
        &mut store,
        0..upto,
        inputs.config.batch_size,
        &inputs.config.time_encoder(),
        inputs.config.t_gap,
    )?;
    Ok(store)
}

/// Scores the positives of `range` (restricted to events touching new
/// nodes in the inductive setting) against one sampled negative each,
/// committing every batch afterwards. Returns `(scores, labels)`.
#[allow(clippy::too_many_arguments)]
pub fn score_range(
    params: &ModelParams,
    stream: &EventStream,
    split: &ChronoSplit,
    store: &mut PositionalStore,
    range: Range<usize>,
    setting: Setting,
    sampler: &mut NegativeSampler,
    batch_size: usize,
    time: &TimeEncoder,
    t_gap: f64,
) -> Result<(Vec<f64>, Vec<bool>), TrainError> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for batch in stream.batches(range, batch_size) {
        let events = &stream.events()[batch];
        let positives: Vec<(usize, usize, f64)> = events
            .iter()
            .filter(|e| setting == Setting::Transductive || split.is_new(e.src) || split.is_new(e.dst))
            .map(|e| (e.src, e.dst, e.timestamp))
            .collect();
        let negatives = sampler.sample(&positives)?;
        let commits = {
            let inputs = ForwardInputs {
                stream,
                store,
                time,
                t_gap,
            };
            let mut fwd = Forward::new(params, inputs, false)?;
            for &(u, v, t) in &positives {
                let p = fwd.probability(u, v, t)?;
                scores.push(fwd.tape.value(p).data()[0]);
                labels.push(true);
            }
            for (&(a, b), &(_, _, t)) in negatives.iter().zip(&positives) {
                let p = fwd.probability(a, b, t)?;
                scores.push(fwd.tape.value(p).data()[0]);
                labels.push(false);
            }
            batch_commits(&mut fwd, &params.lpe.mlp, stream, events, params.dims.k, time)?
        };
        apply_commits(store, commits)?;
    }
    Ok((scores, labels))
}

fn cell_rng_stream(setting: Setting, strategy: Strategy) -> u64 {
    let s = Setting::ALL.iter().position(|&x| x == setting).unwrap() as u64;
    let g = Strategy::ALL.iter().position(|&x| x == strategy).unwrap() as u64;
    100 + 3 * s + g
}

/// Evaluates every requested cell on the test segment, sharing one warm-up.
pub fn evaluate_cells(
    inputs: EvalInputs<'_>,
    cells: &[(Setting, Strategy)],
    seed: u64,
) -> Result<Vec<CellResult>, TrainError> {
    let warm = warm_store(inputs, inputs.split.val_end)?;
    let time = inputs.config.time_encoder();
    let mut out = Vec::with_capacity(cells.len());
    for &(setting, strategy) in cells {
        let mut store = warm.clone();
        let mut sampler = NegativeSampler::new(
            inputs.stream,
            inputs.split,
            strategy,
            seeded_rng(seed, cell_rng_stream(setting, strategy)),
        );
        let (scores, labels) = score_range(
            inputs.params,
            inputs.stream,
            inputs.split,
            &mut store,
            inputs.split.test(),
            setting,
            &mut sampler,
            inputs.config.batch_size,
            &time,
            inputs.config.t_gap,
        )?;
        if scores.is_empty() {
            return Err(TrainError::NoInductiveEvents { segment: "the test segment" });
        }
        out.push(CellResult {
            setting,
            strategy,
            ap: average_precision(&scores, &labels)?,
            roc_auc: roc_auc(&scores, &labels)?,
            positives: scores.len() / 2,
            fallbacks: sampler.fallbacks(),
        });
    }
    Ok(out)
}

/// Test-segment `(AP, ROC-AUC)` for one setting and strategy.
pub fn evaluate(
    inputs: EvalInputs<'_>,
    setting: Setting,
    strategy: Strategy,
    seed: u64,
) -> Result<(f64, f64), TrainError> {
    let cell = evaluate_cells(inputs, &[(setting, strategy)], seed)?.remove(0);
    Ok((cell.ap, cell.roc_auc))
}
