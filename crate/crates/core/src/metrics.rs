//! Multi-label evaluation: Macro-AUC, ranking loss, and Hamming loss.
//!
//! Scores are real-valued, labels are {0, 1}.  Tie handling follows the
//! usual conventions: AUC counts tied score pairs as half, ranking loss
//! counts a tied (relevant, irrelevant) pair as a violation, and the
//! Hamming threshold is inclusive (`score >= 0.5` predicts positive).
//! Labels without both a positive and a negative example carry no AUC
//! signal and are skipped but counted.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// All three metrics for one score matrix, plus bookkeeping about
/// skipped degenerate labels and instances.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub macro_auc: f64,
    pub ranking_loss: f64,
    pub hamming_loss: f64,
    /// AUC per label; `None` marks a degenerate (single-class) label.
    pub per_label_auc: Vec<Option<f64>>,
    pub skipped_labels: usize,
    /// Instances without both a relevant and an irrelevant label, excluded
    /// from ranking loss.
    pub skipped_instances: usize,
}

fn check_shapes(
    context: &'static str,
    scores: &ArrayView2<'_, f64>,
    labels: &ArrayView2<'_, u8>,
) -> Result<()> {
    if scores.dim() != labels.dim() {
        return Err(Error::ShapeMismatch {
            context,
            expected: format!("{} x {}", scores.nrows(), scores.ncols()),
            actual: format!("{} x {}", labels.nrows(), labels.ncols()),
        });
    }
    if scores.is_empty() {
        return Err(Error::Precondition(format!("{context} of an empty matrix")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("{context} scores")));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Domain {
            name: "label",
            value: f64::NAN,
            expected: "{0, 1}",
        });
    }
    Ok(())
}

/// AUC of one label column via the rank-sum statistic with average ranks
/// for ties; `None` when the column is single-class.
fn column_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut k = 0;
    while k < n {
        let mut end = k + 1;
        while end < n && scores[order[end]] == scores[order[k]] {
            end += 1;
        }
        // ranks are 1-based; a run of equal scores shares the mean rank
        let mean_rank = (k + 1 + end) as f64 / 2.0;
        for &idx in &order[k..end] {
            if labels[idx] == 1 {
                rank_sum_pos += mean_rank;
            }
        }
        k = end;
    }
    let np = n_pos as f64;
    Some((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// Mean per-label AUC over non-degenerate labels.
///
/// Returns the macro average, the per-label values, and how many labels
/// were skipped.  Errs when every label is degenerate.
pub fn macro_auc(
    scores: ArrayView2<'_, f64>,
    labels: ArrayView2<'_, u8>,
) -> Result<(f64, Vec<Option<f64>>, usize)> {
    check_shapes("macro_auc", &scores, &labels)?;
    let q = scores.ncols();
    let mut per_label = Vec::with_capacity(q);
    let mut sum = 0.0;
    let mut used = 0usize;
    for j in 0..q {
        let s: Vec<f64> = scores.column(j).to_vec();
        let y: Vec<u8> = labels.column(j).to_vec();
        let auc = column_auc(&s, &y);
        if let Some(a) = auc {
            sum += a;
            used += 1;
        }
        per_label.push(auc);
    }
    if used == 0 {
        return Err(Error::MetricUndefined(
            "macro_auc: every label is single-class".into(),
        ));
    }
    Ok((sum / used as f64, per_label, q - used))
}

/// Mean fraction of (relevant, irrelevant) label pairs ranked wrongly per
/// instance, ties counting as violations.
///
/// Instances lacking either a relevant or an irrelevant label are skipped;
/// the second return value counts them.  Errs when no instance is
/// eligible.
pub fn ranking_loss(
    scores: ArrayView2<'_, f64>,
    labels: ArrayView2<'_, u8>,
) -> Result<(f64, usize)> {
    check_shapes("ranking_loss", &scores, &labels)?;
    let mut total = 0.0;
    let mut eligible = 0usize;
    for (srow, yrow) in scores.rows().into_iter().zip(labels.rows()) {
        let mut rel = Vec::new();
        let mut irr = Vec::new();
        for (&s, &y) in srow.iter().zip(yrow.iter()) {
            if y == 1 {
                rel.push(s);
            } else {
                irr.push(s);
            }
        }
        if rel.is_empty() || irr.is_empty() {
            continue;
        }
        irr.sort_by(f64::total_cmp);
        let mut violations = 0usize;
        for &r in &rel {
            // number of irrelevant scores >= r, ties included
            violations += irr.len() - irr.partition_point(|&x| x < r);
        }
        total += violations as f64 / (rel.len() * irr.len()) as f64;
        eligible += 1;
    }
    if eligible == 0 {
        return Err(Error::MetricUndefined(
            "ranking_loss: no instance has both a relevant and an irrelevant label".into(),
        ));
    }
    Ok((total / eligible as f64, scores.nrows() - eligible))
}

/// Fraction of label cells whose thresholded prediction disagrees with the
/// truth.  The threshold is inclusive: `score >= threshold` predicts 1.
pub fn hamming_loss(
    scores: ArrayView2<'_, f64>,
    labels: ArrayView2<'_, u8>,
    threshold: f64,
) -> Result<f64> {
    check_shapes("hamming_loss", &scores, &labels)?;
    let mism = scores
        .iter()
        .zip(labels.iter())
        .filter(|(&s, &y)| u8::from(s >= threshold) != y)
        .count();
    Ok(mism as f64 / scores.len() as f64)
}

/// Runs all three metrics at the standard 0.5 threshold.
pub fn evaluate(
    scores: ArrayView2<'_, f64>,
    labels: ArrayView2<'_, u8>,
) -> Result<EvaluationReport> {
    let (auc, per_label_auc, skipped_labels) = macro_auc(scores, labels)?;
    let (rl, skipped_instances) = ranking_loss(scores, labels)?;
    let hl = hamming_loss(scores, labels, 0.5)?;
    Ok(EvaluationReport {
        macro_auc: auc,
        ranking_loss: rl,
        hamming_loss: hl,
        per_label_auc,
        skipped_labels,
        skipped_instances,
    })
}
