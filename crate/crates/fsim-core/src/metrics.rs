//! Precision-recall evaluation and the client selection probability formula.
//!
//! PR-AUC uses average-precision step summation over distinct-score threshold
//! groups (no trapezoidal interpolation), and the macro score is the
//! unweighted mean over classes that have at least one positive example.

use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("scores ({scores}) and labels ({labels}) have different lengths")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no positive labels present")]
    NoPositives,
    #[error("no class has a positive label")]
    NoScoredClasses,
    #[error("score and label matrices have different shapes")]
    ShapeMismatch,
}

/// One precision/recall operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall curve with recall non-decreasing along `points`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub positives: usize,
    pub negatives: usize,
}

/// Walk threshold groups in descending score order. Tied scores form a
/// single group. Calls `visit(tp, fp)` with cumulative counts after each
/// group.
fn walk_threshold_groups(
    scores: &[f64],
    labels: &[bool],
    mut visit: impl FnMut(usize, usize),
) -> Result<(usize, usize), MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let negatives = labels.len() - positives;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0usize;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        visit(tp, fp);
    }
    Ok((positives, negatives))
}

/// Precision-recall curve at every distinct score threshold, descending.
/// The curve starts at the conventional (recall 0, precision 1) anchor.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve, MetricsError> {
    let total_positives = labels.iter().filter(|l| **l).count() as f64;
    let mut points = vec![PrPoint { recall: 0.0, precision: 1.0 }];
    let (positives, negatives) = walk_threshold_groups(scores, labels, |tp, fp| {
        points.push(PrPoint {
            recall: tp as f64 / total_positives,
            precision: tp as f64 / (tp + fp) as f64,
        });
    })?;
    Ok(PrCurve { points, positives, negatives })
}

/// Average precision: `sum over threshold groups of (R_i - R_{i-1}) * P_i`.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    let total_positives = labels.iter().filter(|l| **l).count() as f64;
    let mut auc = 0.0;
    let mut prev_recall = 0.0;
    walk_threshold_groups(scores, labels, |tp, fp| {
        let recall = tp as f64 / total_positives;
        let precision = tp as f64 / (tp + fp) as f64;
        auc += (recall - prev_recall) * precision;
        prev_recall = recall;
    })?;
    Ok(auc)
}

/// Macro PR-AUC over a `[examples x classes]` score/label pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroPrAuc {
    pub value: f64,
    /// Classes that carried at least one positive and were averaged.
    pub classes_scored: usize,
    /// Classes skipped because they had no positive example.
    pub classes_skipped: usize,
}

/// Unweighted mean of per-class [`pr_auc`] over classes with at least one
/// positive label; positive-free classes are skipped and counted.
pub fn macro_pr_auc(scores: &Matrix, labels: &Matrix) -> Result<MacroPrAuc, MetricsError> {
    if scores.rows() != labels.rows() || scores.cols() != labels.cols() {
        return Err(MetricsError::ShapeMismatch);
    }
    let mut sum = 0.0;
    let mut scored = 0usize;
    let mut skipped = 0usize;
    for class in 0..scores.cols() {
        let class_scores: Vec<f64> = (0..scores.rows()).map(|i| scores.get(i, class)).collect();
        let class_labels: Vec<bool> = (0..labels.rows()).map(|i| labels.get(i, class) != 0.0).collect();
        match pr_auc(&class_scores, &class_labels) {
            Ok(auc) => {
                sum += auc;
                scored += 1;
            }
            Err(MetricsError::NoPositives) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if scored == 0 {
        return Err(MetricsError::NoScoredClasses);
    }
    Ok(MacroPrAuc { value: sum / scored as f64, classes_scored: scored, classes_skipped: skipped })
}

/// Probability that a fixed client is selected at least once in `rounds`
/// rounds under per-round cohorts of `m = max(1, round(c * n))` drawn
/// uniformly without replacement: `1 - (1 - m/n)^rounds`.
pub fn selection_probability(num_clients: usize, c: f64, rounds: u32) -> f64 {
    let m = cohort_size(num_clients, c);
    1.0 - (1.0 - m as f64 / num_clients as f64).powi(rounds as i32)
}

/// Per-round cohort size rule shared with the federation sampler.
pub fn cohort_size(num_clients: usize, c: f64) -> usize {
    ((c * num_clients as f64).round() as usize).clamp(1, num_clients)
}
