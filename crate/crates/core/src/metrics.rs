//! Rank-based evaluation metrics.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Prediction scores paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::input(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::input("scores must be finite"));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::input("labels must be 0 or 1"));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    fn order_by_score(&self, descending: bool) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| {
            let o = self.scores[a]
                .partial_cmp(&self.scores[b])
                .unwrap_or(Ordering::Equal);
            if descending {
                o.reverse()
            } else {
                o
            }
        });
        idx
    }
}

/// Runs of equal scores in an index order sorted by score.
fn tie_groups<'a>(data: &'a ScoredLabels, order: &'a [usize]) -> impl Iterator<Item = &'a [usize]> {
    order.chunk_by(move |&a, &b| data.scores[a] == data.scores[b])
}

/// Area under the ROC curve: the Mann-Whitney probability that a positive
/// outscores a negative, ties counting one half.
pub fn auroc(data: &ScoredLabels) -> Result<f64> {
    let pos = data.positives();
    let neg = data.labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUCROC needs both classes ({pos} positives, {neg} negatives)"
        )));
    }
    let order = data.order_by_score(false);
    // Count, for each positive, the negatives strictly below plus half the tied ones.
    let mut negatives_below = 0usize;
    let mut wins2 = 0u128; // twice the win count, to stay in integers
    for group in tie_groups(data, &order) {
        let group_pos = group.iter().filter(|&&i| data.labels[i] == 1).count();
        let group_neg = group.len() - group_pos;
        wins2 += (group_pos as u128) * (2 * negatives_below + group_neg) as u128;
        negatives_below += group_neg;
    }
    Ok(wins2 as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Average precision: `sum_k (R_k - R_{k-1}) * P_k` over distinct score
/// thresholds, highest first. Tied scores enter as one threshold.
pub fn aupr(data: &ScoredLabels) -> Result<f64> {
    let pos = data.positives();
    if pos == 0 {
        return Err(Error::UndefinedMetric(
            "AUCPR needs at least one positive".into(),
        ));
    }
    let order = data.order_by_score(true);
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for group in tie_groups(data, &order) {
        tp += group.iter().filter(|&&i| data.labels[i] == 1).count();
        seen += group.len();
        let recall = tp as f64 / pos as f64;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    Ok(ap)
}

/// Arithmetic mean of per-silo scores.
pub fn mean_over_silos(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::input("no silo scores to average"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
