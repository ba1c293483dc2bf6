//! Detection and classification metrics: AUROC (rank-sum with midranks),
//! AUPR (step-wise interpolation with grouped thresholds), FPR at a fixed
//! IND true-positive rate, and IND classification accuracy.
//!
//! Convention: scores are energies, higher means more OOD. OOD is the
//! positive class for AUROC/AUPR; the FPR95 operating point is fixed by
//! the IND acceptance rate (fraction of IND energies at or below the
//! threshold).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{LectError, Result};

/// Scores plus OOD flags, the input to every detection metric.
#[derive(Debug, Clone)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub is_ood: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, is_ood: Vec<bool>) -> Result<Self> {
        if scores.len() != is_ood.len() {
            return Err(LectError::Metric("scores and flags length mismatch".into()));
        }
        Ok(Self { scores, is_ood })
    }

    fn check_both_classes(&self) -> Result<()> {
        let pos = self.is_ood.iter().filter(|&&o| o).count();
        if pos == 0 || pos == self.is_ood.len() {
            return Err(LectError::Metric("both classes must be present".into()));
        }
        Ok(())
    }
}

/// Mann-Whitney AUROC: P(score_ood > score_ind) + 0.5 P(equal), computed
/// from the rank sum with midranks for ties.
pub fn auroc(s: &ScoredSet) -> Result<f64> {
    s.check_both_classes()?;
    let n = s.scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.scores[a].partial_cmp(&s.scores[b]).unwrap());

    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && s.scores[order[j + 1]] == s.scores[order[i]] {
            j += 1;
        }
        // midrank of the tie group spanning positions i..=j (1-based ranks)
        let midrank = (i + j + 2) as f64 / 2.0;
        for k in i..=j {
            ranks[order[k]] = midrank;
        }
        i = j + 1;
    }

    let n_pos = s.is_ood.iter().filter(|&&o| o).count() as f64;
    let n_neg = n as f64 - n_pos;
    let rank_sum: f64 = (0..n).filter(|&k| s.is_ood[k]).map(|k| ranks[k]).sum();
    let u = rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg))
}

/// Area under precision-recall by step-wise interpolation over distinct
/// thresholds in descending score order, ties grouped; OOD is positive.
pub fn aupr(s: &ScoredSet) -> Result<f64> {
    s.check_both_classes()?;
    let n = s.scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.scores[b].partial_cmp(&s.scores[a]).unwrap());

    let total_pos = s.is_ood.iter().filter(|&&o| o).count() as f64;
    let mut tp = 0.0f64;
    let mut fp = 0.0f64;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && s.scores[order[j + 1]] == s.scores[order[i]] {
            j += 1;
        }
        for k in i..=j {
            if s.is_ood[order[k]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
        let recall = tp / total_pos;
        let precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(area)
}

/// FPR at the threshold where `tpr` of the IND energies are accepted:
/// fraction of OOD scores at or below the smallest IND score covering
/// `tpr` of the IND set.
pub fn fpr_at_tpr(s: &ScoredSet, tpr: f64) -> Result<f64> {
    s.check_both_classes()?;
    let ind: Vec<f64> =
        s.scores.iter().zip(&s.is_ood).filter(|(_, &o)| !o).map(|(&x, _)| x).collect();
    let threshold = crate::energy::calibrate_tau(&ind, tpr)?;
    let ood: Vec<f64> =
        s.scores.iter().zip(&s.is_ood).filter(|(_, &o)| o).map(|(&x, _)| x).collect();
    let below = ood.iter().filter(|&&x| x <= threshold).count();
    Ok(below as f64 / ood.len() as f64)
}

/// Fraction of nodes whose argmax logit equals the label; argmax ties break
/// to the lowest class id.
pub fn ind_accuracy(logits: &Array2<f64>, nodes: &[usize], labels: &[u32]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(LectError::Metric("ind_accuracy on empty node set".into()));
    }
    if nodes.len() != labels.len() {
        return Err(LectError::Metric("nodes vs labels length mismatch".into()));
    }
    let mut correct = 0usize;
    for (&node, &label) in nodes.iter().zip(labels) {
        let row = logits.row(node);
        let mut best = 0usize;
        for k in 1..row.len() {
            if row[k] > row[best] {
                best = k;
            }
        }
        if best as u32 == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / nodes.len() as f64)
}

/// Final evaluation record; detection metrics are absent when the test set
/// has no OOD nodes. Fractions in [0, 1], scaled to percent only at the
/// CSV formatting layer.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub ind_acc: f64,
    pub auroc: Option<f64>,
    pub aupr: Option<f64>,
    pub fpr95: Option<f64>,
    pub tau: f64,
    pub seed: u64,
    pub epoch: u64,
    pub config_hash: String,
}

/// Mean and (population) standard deviation of per-seed metric values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
