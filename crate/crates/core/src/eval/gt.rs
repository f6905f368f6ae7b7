//! Saliency maps scored against the ground-truth mask as a per-instance
//! ranking problem.

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GroundTruthMask, Saliency};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtScore {
    pub ap: f64,
    pub roc_auc: f64,
    pub n_used: usize,
    /// Instances whose mask is all zeros or all ones.
    pub n_skipped: usize,
}

/// Indices sorted by descending score, then the boundaries of tied runs.
fn tied_runs(scores: &[f64]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut runs = Vec::new();
    let mut start = 0;
    for j in 1..=idx.len() {
        if j == idx.len() || scores[idx[j]] != scores[idx[start]] {
            runs.push((start, j));
            start = j;
        }
    }
    (idx, runs)
}

/// Step-wise average precision: `Σ (R_t − R_{t−1}) · P_t` over the distinct
/// score thresholds `t`, highest first. `None` without positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 {
        return None;
    }
    let (idx, runs) = tied_runs(scores);
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (start, end) in runs {
        let run_tp = idx[start..end].iter().filter(|&&i| labels[i]).count();
        if run_tp > 0 {
            tp += run_tp;
            ap += (run_tp as f64 / positives as f64) * (tp as f64 / end as f64);
        }
    }
    Some(ap)
}

/// Area under the ROC curve via average ranks (ties count one half).
/// `None` unless both classes are present.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let p = labels.iter().filter(|&&y| y).count();
    let q = labels.len() - p;
    if p == 0 || q == 0 {
        return None;
    }
    // Ascending ranks 1..n: a run occupying descending positions
    // [start, end) holds ascending ranks n−end+1 ..= n−start.
    let (idx, runs) = tied_runs(scores);
    let n = labels.len();
    let mut rank_sum = 0.0;
    for (start, end) in runs {
        let avg = ((n - end + 1) + (n - start)) as f64 / 2.0;
        let pos = idx[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum += avg * pos as f64;
    }
    let u = rank_sum - (p * (p + 1)) as f64 / 2.0;
    Some(u / (p as f64 * q as f64))
}

/// Mean AP and ROC-AUC of every instance's attributions against its mask.
pub fn gt_metrics<T: Scalar>(saliency: &Saliency<T>, gt: &GroundTruthMask) -> Result<GtScore> {
    if saliency.dim() != gt.dim() {
        return Err(Error::Dimension(format!(
            "saliency shape {:?} does not match ground truth {:?}",
            saliency.dim(),
            gt.dim()
        )));
    }
    let n = saliency.dim().0;
    let per: Vec<Option<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let scores: Vec<f64> = saliency.instance(i).iter().map(|v| v.to_f64_lossy()).collect();
            let labels: Vec<bool> = gt.values().index_axis(Axis(0), i).iter().map(|&g| g == 1).collect();
            Some((average_precision(&scores, &labels)?, roc_auc(&scores, &labels)?))
        })
        .collect();
    let used: Vec<(f64, f64)> = per.into_iter().flatten().collect();
    let skipped = n - used.len();
    if skipped > 0 {
        log::warn!("gt_metrics: skipped {skipped} instance(s) with a single-class mask");
    }
    if used.is_empty() {
        return Err(Error::Validation("every ground-truth instance is single-class".into()));
    }
    let m = used.len() as f64;
    Ok(GtScore {
        ap: used.iter().map(|u| u.0).sum::<f64>() / m,
        roc_auc: used.iter().map(|u| u.1).sum::<f64>() / m,
        n_used: used.len(),
        n_skipped: skipped,
    })
}
