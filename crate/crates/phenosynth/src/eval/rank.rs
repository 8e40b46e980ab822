//! Ranking metrics and threshold confusion rates.

use super::EvalError;

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Input(format!(
            "scores ({}) and labels ({}) differ in length",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(EvalError::Input("empty sample".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(EvalError::Input(format!("non-finite score {bad}")));
    }
    Ok(())
}

/// Area under the precision-recall curve as average precision:
/// `sum_k (R_k - R_{k-1}) * P_k` over score-descending thresholds, with tied
/// scores grouped at a single threshold. No interpolation.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(EvalError::UndefinedMetric("auprc needs at least one positive".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        // One threshold per distinct score value.
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] {
                tp += 1;
            }
            seen += 1;
            j += 1;
        }
        let precision = tp as f64 / seen as f64;
        let recall = tp as f64 / positives as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// Area under the ROC curve: the fraction of positive-negative pairs ranked
/// correctly, with half credit for ties. Computed from average ranks, which
/// agrees exactly with the pairwise definition.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::UndefinedMetric(
            "auroc needs at least one positive and one negative".into(),
        ));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| *r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// 1-based ranks in ascending score order; tied scores share their average rank.
pub(crate) fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        // Positions i..j (0-based) hold ranks i+1 ..= j, averaging to:
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// False-positive and false-negative rates when predicting positive at
/// `score >= threshold`.
pub fn confusion_rates(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<(f64, f64), EvalError> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::UndefinedMetric(
            "confusion rates need at least one positive and one negative".into(),
        ));
    }
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&s, &l) in scores.iter().zip(labels) {
        let predicted = s >= threshold;
        if predicted && !l {
            fp += 1;
        }
        if !predicted && l {
            fn_ += 1;
        }
    }
    Ok((fp as f64 / n_neg as f64, fn_ as f64 / n_pos as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auprc_perfect_separation() {
        assert_eq!(auprc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
    }

    #[test]
    fn auprc_constant_scores_equal_prevalence() {
        let scores = [0.5; 8];
        let labels = [true, false, false, false, true, false, false, false];
        assert_eq!(auprc(&scores, &labels).unwrap(), 0.25);
    }

    #[test]
    fn auprc_hand_swept_example() {
        let v = auprc(&[0.8, 0.7, 0.6, 0.5], &[true, false, true, false]).unwrap();
        assert!((v - 5.0 / 6.0).abs() < 1e-15, "{v}");
    }

    #[test]
    fn auprc_needs_a_positive() {
        assert!(matches!(
            auprc(&[0.5, 0.3], &[false, false]),
            Err(EvalError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(
            auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(),
            0.75
        );
        assert_eq!(auroc(&[0.2; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.1, 0.2, 0.9, 0.95], &[false, false, true, true]).unwrap(), 1.0);
    }

    #[test]
    fn auroc_needs_both_classes() {
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(auroc(&[0.1, 0.2], &[false, false]).is_err());
    }

    #[test]
    fn confusion_rate_examples() {
        assert_eq!(
            confusion_rates(&[0.9, 0.1], &[true, false], 0.5).unwrap(),
            (0.0, 0.0)
        );
        assert_eq!(
            confusion_rates(&[0.1, 0.9], &[true, false], 0.5).unwrap(),
            (1.0, 1.0)
        );
        // 2 FP of 4 negatives, 1 FN of 2 positives.
        let scores = [0.9, 0.2, 0.7, 0.6, 0.3, 0.1];
        let labels = [true, true, false, false, false, false];
        assert_eq!(confusion_rates(&scores, &labels, 0.5).unwrap(), (0.5, 0.5));
    }

    #[test]
    fn length_mismatch_is_an_input_error() {
        assert!(matches!(auprc(&[0.5], &[true, false]), Err(EvalError::Input(_))));
    }
}
