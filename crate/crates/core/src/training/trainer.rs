use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::encoder::{Forward, ForwardInputs};
use crate::graph::{ChronoSplit, EventStream, TemporalEvent, TimeEncoder};
use crate::lpe::PositionalStore;
use crate::model::ModelParams;
use crate::numerics::{AdamState, Tensor};
use crate::pe_init::InitialPe;

use super::evaluate::{score_range, Setting};
use super::loss::{batch_loss_on_tape, BatchLossVars};
use super::replay::{apply_commits, batch_commits};
use super::sampling::{NegativeSampler, Strategy};
use super::{average_precision, roc_auc, seeded_rng, TrainError};

/// Per-epoch losses (means over training batches) and validation metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub loss_lp: f64,
    pub loss_pe: f64,
    pub val_ap: f64,
    pub val_roc_auc: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopVerdict {
    Improved,
    Continue,
    Stop,
}

/// Stops once `patience` consecutive epochs fail to beat the best metric.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, metric: f64) -> StopVerdict {
        if metric > self.best {
            self.best = metric;
            self.best_epoch = epoch;
            self.stale = 0;
            return StopVerdict::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopVerdict::Stop
        } else {
            StopVerdict::Continue
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub params: ModelParams,
    pub init_pe: InitialPe,
    pub epochs: Vec<EpochRecord>,
    /// Total loss of every training batch, in order.
    pub batch_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_ap: f64,
    pub stopped_early: bool,
}

struct BatchLoss {
    total: f64,
    lp: f64,
    pe: f64,
}

/// Initial encodings from the edges of the first training batch.
fn initial_pe(stream: &EventStream, split: &ChronoSplit, config: &RunConfig) -> Result<InitialPe, TrainError> {
    let first = 0..config.batch_size.min(split.train_end);
    let edges: Vec<(usize, usize)> = stream.events()[first].iter().map(|e| (e.src, e.dst)).collect();
    Ok(InitialPe::build(config.pe_init, &edges, stream.num_nodes(), config.d_p)?)
}

fn check_dims(stream: &EventStream, config: &RunConfig) -> Result<(), TrainError> {
    let mut problems = Vec::new();
    if stream.node_dim() != config.d_n {
        problems.push(format!("d_n = {} but the stream has {} node feature columns", config.d_n, stream.node_dim()));
    }
    if stream.edge_dim() != config.d_e {
        problems.push(format!("d_e = {} but the stream has {} edge feature columns", config.d_e, stream.edge_dim()));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(TrainError::Config(problems.join("; ")))
    }
}

fn record_batch(
    fwd: &mut Forward<'_>,
    events: &[TemporalEvent],
    negatives: &[(usize, usize)],
    config: &RunConfig,
) -> Result<BatchLossVars, TrainError> {
    let mut pos_probs = Vec::with_capacity(events.len());
    let mut neg_probs = Vec::with_capacity(events.len());
    let mut pos_pairs = Vec::with_capacity(events.len());
    let mut neg_pairs = Vec::with_capacity(events.len());
    for (e, &(a, b)) in events.iter().zip(negatives) {
        pos_probs.push(fwd.probability(e.src, e.dst, e.timestamp)?);
        neg_probs.push(fwd.probability(a, b, e.timestamp)?);
        pos_pairs.push((fwd.approx_pe(e.src)?, fwd.approx_pe(e.dst)?));
        neg_pairs.push((fwd.approx_pe(a)?, fwd.approx_pe(b)?));
    }
    batch_loss_on_tape(
        &mut fwd.tape,
        &pos_probs,
        &neg_probs,
        &pos_pairs,
        &neg_pairs,
        config.alpha_neg,
        config.alpha_pe,
    )
}

fn named_grads(fwd: &Forward<'_>, loss: crate::numerics::Var) -> Result<BTreeMap<String, Tensor>, TrainError> {
    let g = fwd.tape.backward(loss)?;
    Ok(fwd
        .vars
        .named
        .iter()
        .filter_map(|(name, var)| g.get(*var).map(|t| (name.clone(), t.clone())))
        .collect())
}

/// Total loss of one batch against given negatives, with the gradient of
/// every parameter it reaches. Leaves the store untouched.
pub fn batch_objective(
    params: &ModelParams,
    stream: &EventStream,
    store: &PositionalStore,
    events: &[TemporalEvent],
    negatives: &[(usize, usize)],
    config: &RunConfig,
    time: &TimeEncoder,
) -> Result<(f64, BTreeMap<String, Tensor>), TrainError> {
    let inputs = ForwardInputs {
        stream,
        store,
        time,
        t_gap: config.t_gap,
    };
    let mut fwd = Forward::new(params, inputs, true)?;
    let vars = record_batch(&mut fwd, events, negatives, config)?;
    let total = fwd.tape.value(vars.total).data()[0];
    Ok((total, named_grads(&fwd, vars.total)?))
}

#[allow(clippy::too_many_arguments)]
fn train_batch(
    params: &mut ModelParams,
    adam: &mut AdamState,
    stream: &EventStream,
    store: &mut PositionalStore,
    events: &[TemporalEvent],
    negatives: &[(usize, usize)],
    config: &RunConfig,
    time: &TimeEncoder,
) -> Result<(BatchLoss, BTreeMap<String, Tensor>), TrainError> {
    let (loss, grads, commits) = {
        let inputs = ForwardInputs {
            stream,
            store,
            time,
            t_gap: config.t_gap,
        };
        let mut fwd = Forward::new(params, inputs, true)?;
        let vars = record_batch(&mut fwd, events, negatives, config)?;
        let scalar = |v| fwd.tape.value(v).data()[0];
        let loss = BatchLoss {
            total: scalar(vars.total),
            lp: scalar(vars.lp),
            pe: scalar(vars.pe),
        };
        let grads = if loss.total.is_finite() {
            named_grads(&fwd, vars.total)?
        } else {
            BTreeMap::new()
        };
        let commits = batch_commits(&mut fwd, &params.lpe.mlp, stream, events, params.dims.k, time)?;
        (loss, grads, commits)
    };
    if loss.total.is_finite() {
        adam.step(params, &grads)?;
        apply_commits(store, commits)?;
    }
    Ok((loss, grads))
}

/// Trains with early stopping on validation AP.
pub fn train(stream: &EventStream, split: &ChronoSplit, config: &RunConfig) -> Result<TrainOutcome, TrainError> {
    train_observed(stream, split, config, &mut |_| {})
}

/// As [`train`], calling `observe` on each epoch's record before the
/// stopping decision; the observer may rewrite the validation metrics.
pub fn train_observed(
    stream: &EventStream,
    split: &ChronoSplit,
    config: &RunConfig,
    observe: &mut dyn FnMut(&mut EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    check_dims(stream, config)?;
    let dims = config.dims();
    let time = config.time_encoder();
    let mut params = ModelParams::init(dims, config.share_pe_mlp, &mut seeded_rng(config.seed, 0));
    let init_pe = initial_pe(stream, split, config)?;
    let mut adam = AdamState::new(config.adam());
    let mut train_neg = NegativeSampler::new(stream, split, Strategy::Random, seeded_rng(config.seed, 1));
    let mut store = PositionalStore::new(stream.num_nodes(), dims.l, dims.d_p);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = params.clone();
    let mut epochs = Vec::new();
    let mut batch_losses = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        store.reset(Some(&init_pe));
        let (mut sum, mut sum_lp, mut sum_pe, mut count) = (0.0, 0.0, 0.0, 0usize);
        for (batch_index, batch) in stream.batches(split.train(), config.batch_size).enumerate() {
            let events = &stream.events()[batch];
            let positives: Vec<_> = events.iter().map(|e| (e.src, e.dst, e.timestamp)).collect();
            let negatives = train_neg.sample(&positives)?;
            let (loss, _) = train_batch(&mut params, &mut adam, stream, &mut store, events, &negatives, config, &time)?;
            if !loss.total.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                    value: loss.total,
                });
            }
            log::trace!("epoch {epoch} batch {batch_index}: loss {:.6}", loss.total);
            batch_losses.push(loss.total);
            sum += loss.total;
            sum_lp += loss.lp;
            sum_pe += loss.pe;
            count += 1;
        }
        let n = count.max(1) as f64;

        let mut val_neg = NegativeSampler::new(stream, split, Strategy::Random, seeded_rng(config.seed, 2));
        let (scores, labels) = score_range(
            &params,
            stream,
            split,
            &mut store,
            split.val(),
            Setting::Transductive,
            &mut val_neg,
            config.batch_size,
            &time,
            config.t_gap,
        )?;
        let (val_ap, val_roc_auc) = if scores.is_empty() {
            (0.0, 0.5)
        } else {
            (average_precision(&scores, &labels)?, roc_auc(&scores, &labels)?)
        };
        let mut record = EpochRecord {
            epoch,
            loss: sum / n,
            loss_lp: sum_lp / n,
            loss_pe: sum_pe / n,
            val_ap,
            val_roc_auc,
        };
        observe(&mut record);
        log::info!(
            "epoch {epoch}: loss {:.5} (lp {:.5}, pe {:.5}) val AP {:.4} AUC {:.4}",
            record.loss,
            record.loss_lp,
            record.loss_pe,
            record.val_ap,
            record.val_roc_auc
        );
        let verdict = stopper.update(epoch, record.val_ap);
        epochs.push(record);
        match verdict {
            StopVerdict::Improved => best = params.clone(),
            StopVerdict::Continue => {}
            StopVerdict::Stop => {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best,
        init_pe,
        epochs,
        batch_losses,
        best_epoch: stopper.best_epoch(),
        best_val_ap: stopper.best(),
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_counts_stale_epochs() {
        let mut s = EarlyStopping::new(3);
        assert_eq!(s.update(1, 0.5), StopVerdict::Improved);
        assert_eq!(s.update(2, 0.5), StopVerdict::Continue);
        assert_eq!(s.update(3, 0.6), StopVerdict::Improved);
        assert_eq!(s.update(4, 0.1), StopVerdict::Continue);
        assert_eq!(s.update(5, 0.6), StopVerdict::Continue);
        assert_eq!(s.update(6, 0.6), StopVerdict::Stop);
        assert_eq!((s.best(), s.best_epoch()), (0.6, 3));
    }
}
