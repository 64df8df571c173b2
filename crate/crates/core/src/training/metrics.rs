//! Ranking metrics over scored positive/negative pairs.

use super::TrainError;

fn validate(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), TrainError> {
    if scores.len() != labels.len() {
        return Err(TrainError::Metric(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(TrainError::Metric(format!("score {i} is not finite")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Area under the precision-recall step curve: `Σ_k precision@k · Δrecall@k`
/// over scores in descending order. Ties keep input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64, TrainError> {
    let (pos, _) = validate(scores, labels)?;
    if pos == 0 {
        return Err(TrainError::Metric("average precision needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp = 0usize;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        }
        let precision = tp as f64 / (rank + 1) as f64;
        let recall = tp as f64 / pos as f64;
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    Ok(ap)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, TrainError> {
    let (pos, neg) = validate(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(TrainError::Metric(format!(
            "ROC-AUC needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    let mut neg_scores: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| !l)
        .map(|(&s, _)| s)
        .collect();
    neg_scores.sort_by(f64::total_cmp);
    // Twice the Mann-Whitney count, kept integral.
    let mut twice: u128 = 0;
    for (&s, _) in scores.iter().zip(labels).filter(|(_, &l)| l) {
        let below = neg_scores.partition_point(|&n| n < s);
        let not_above = neg_scores.partition_point(|&n| n <= s);
        twice += 2 * below as u128 + (not_above - below) as u128;
    }
    Ok((twice as f64 / 2.0) / (pos as f64 * neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        let s = [0.9, 0.8, 0.7, 0.6];
        assert_eq!(average_precision(&s, &[true, false, true, false]).unwrap(), 0.5 + 0.5 * (2.0 / 3.0));
        assert_eq!(roc_auc(&s, &[true, false, true, false]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert_eq!(average_precision(&s, &[true, true, false, false]).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_inputs_error() {
        assert!(average_precision(&[0.1, 0.2], &[false, false]).is_err());
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(roc_auc(&[0.1], &[true, false]).is_err());
        assert!(average_precision(&[f64::NAN], &[true]).is_err());
    }
}
