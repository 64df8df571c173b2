//! Link-prediction and positional objectives.

use crate::numerics::{Tape, Var};

use super::TrainError;

pub const LOG_EPS: f64 = 1e-12;

/// `−1/(2B) [Σ ln ŷ⁺ + Σ ln(1 − ŷ⁻)]`, logs clamped to `[ε, 1 − ε]`.
pub fn loss_lp(pos: &[f64], neg: &[f64]) -> f64 {
    let b = pos.len().max(neg.len()).max(1) as f64;
    let s_pos: f64 = pos.iter().map(|&y| y.clamp(LOG_EPS, 1.0 - LOG_EPS).ln()).sum();
    let s_neg: f64 = neg.iter().map(|&y| (1.0 - y).clamp(LOG_EPS, 1.0 - LOG_EPS).ln()).sum();
    -(s_pos + s_neg) / (2.0 * b)
}

/// `(1/B) [Σ ‖p̃_u − p̃_v‖ over positives − α_neg Σ ‖p̃_u − p̃_v′‖ over negatives]`.
pub fn loss_pe(pos_diffs: &[Vec<f64>], neg_diffs: &[Vec<f64>], alpha_neg: f64) -> f64 {
    let norm = |d: &Vec<f64>| d.iter().map(|x| x * x).sum::<f64>().sqrt();
    let b = pos_diffs.len().max(neg_diffs.len()).max(1) as f64;
    let s_pos: f64 = pos_diffs.iter().map(norm).sum();
    let s_neg: f64 = neg_diffs.iter().map(norm).sum();
    (s_pos - alpha_neg * s_neg) / b
}

pub fn total_loss(l_lp: f64, l_pe: f64, alpha_pe: f64) -> f64 {
    (1.0 - alpha_pe) * l_lp + alpha_pe * l_pe
}

/// Recorded losses of one batch.
#[derive(Clone, Copy, Debug)]
pub struct BatchLossVars {
    pub lp: Var,
    pub pe: Var,
    pub total: Var,
}

fn sum_all(tape: &mut Tape, parts: Vec<Var>) -> Result<Var, TrainError> {
    if parts.is_empty() {
        return Ok(tape.constant(crate::numerics::Tensor::scalar(0.0)));
    }
    let all = tape.concat(&parts)?;
    Ok(tape.sum(all))
}

/// Records both objectives. Probabilities are length-1 values; pairs hold
/// approximate encodings of the two endpoints.
pub fn batch_loss_on_tape(
    tape: &mut Tape,
    pos_probs: &[Var],
    neg_probs: &[Var],
    pos_pairs: &[(Var, Var)],
    neg_pairs: &[(Var, Var)],
    alpha_neg: f64,
    alpha_pe: f64,
) -> Result<BatchLossVars, TrainError> {
    let b = pos_probs.len().max(neg_probs.len()).max(1) as f64;
    let mut logs = Vec::with_capacity(pos_probs.len() + neg_probs.len());
    for &p in pos_probs {
        logs.push(tape.log_clamped(p, LOG_EPS));
    }
    for &p in neg_probs {
        let q = tape.affine(p, -1.0, 1.0);
        logs.push(tape.log_clamped(q, LOG_EPS));
    }
    let log_sum = sum_all(tape, logs)?;
    let lp = tape.scale(log_sum, -1.0 / (2.0 * b));

    let norms = |pairs: &[(Var, Var)], tape: &mut Tape| -> Result<Vec<Var>, TrainError> {
        pairs
            .iter()
            .map(|&(a, c)| {
                let d = tape.sub(a, c)?;
                let n = tape.norm2(d);
                Ok(tape.reshape(n, &[1])?)
            })
            .collect()
    };
    let pos_n = norms(pos_pairs, tape)?;
    let neg_n = norms(neg_pairs, tape)?;
    let s_pos = sum_all(tape, pos_n)?;
    let s_neg = sum_all(tape, neg_n)?;
    let s_neg = tape.scale(s_neg, alpha_neg);
    let diff = tape.sub(s_pos, s_neg)?;
    let pe = tape.scale(diff, 1.0 / pos_pairs.len().max(neg_pairs.len()).max(1) as f64);

    let a = tape.scale(lp, 1.0 - alpha_pe);
    let c = tape.scale(pe, alpha_pe);
    let total = tape.add(a, c)?;
    Ok(BatchLossVars { lp, pe, total })
}
