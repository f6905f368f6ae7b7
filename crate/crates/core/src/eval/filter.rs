//! Discarding masks under which no explainer beats the random baseline, and
//! averaging over the rest.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masks::MaskKind;

/// AUC scores of one (method, mask) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskScore {
    pub mask: MaskKind,
    pub auc_top: f64,
    pub auc_bottom: f64,
    pub f1s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Keep a mask when the best method clears the margin.
    #[default]
    BestMethod,
    /// Keep a mask for a method only when that method clears the margin.
    PerMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDecision {
    pub mask: MaskKind,
    pub best_method: String,
    pub best_auc_top: f64,
    pub random_auc_top: f64,
    /// See [`margin_threshold`].
    pub threshold: f64,
    pub kept: bool,
}

/// `random + margin · |random|`: `(1 + margin) · random` for a nonnegative
/// baseline, and still above the baseline when it is negative.
pub fn margin_threshold(random: f64, margin: f64) -> f64 {
    random + margin * random.abs()
}

pub fn clears_margin(score: f64, random: f64, margin: f64) -> bool {
    score >= margin_threshold(random, margin)
}

/// Decide every mask from the best method's `auc_top`.
///
/// `scores` maps method name to its per-mask scores; `random` holds the
/// random baseline's `auc_top` per mask and must cover every scored mask.
pub fn filter_masks(
    scores: &BTreeMap<String, Vec<MaskScore>>,
    random: &BTreeMap<MaskKind, f64>,
    margin: f64,
) -> Result<Vec<MaskDecision>> {
    let mut best: BTreeMap<MaskKind, (String, f64)> = BTreeMap::new();
    for (method, per_mask) in scores {
        for s in per_mask {
            let entry = best.entry(s.mask).or_insert_with(|| (method.clone(), f64::NEG_INFINITY));
            if s.auc_top > entry.1 {
                *entry = (method.clone(), s.auc_top);
            }
        }
    }
    best.into_iter()
        .map(|(mask, (best_method, best_auc_top))| {
            let random_auc_top = *random
                .get(&mask)
                .ok_or_else(|| Error::Config(format!("random baseline was not evaluated under mask {mask}")))?;
            Ok(MaskDecision {
                mask,
                best_method,
                best_auc_top,
                random_auc_top,
                threshold: margin_threshold(random_auc_top, margin),
                kept: clears_margin(best_auc_top, random_auc_top, margin),
            })
        })
        .collect()
}

/// Scores averaged over the kept masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItScore {
    pub auc_top: f64,
    pub auc_bottom: f64,
    pub f1s: f64,
    /// Population standard deviation of `auc_top` across the kept masks.
    pub auc_top_std: f64,
    pub per_mask: Vec<MaskScore>,
    pub kept_masks: Vec<MaskKind>,
}

pub fn aggregate(per_mask: &[MaskScore], kept: &[MaskKind]) -> Result<ItScore> {
    let chosen: Vec<&MaskScore> = per_mask.iter().filter(|s| kept.contains(&s.mask)).collect();
    if chosen.is_empty() {
        return Err(Error::FlatRank);
    }
    let n = chosen.len() as f64;
    let mean = |f: fn(&MaskScore) -> f64| chosen.iter().map(|s| f(s)).sum::<f64>() / n;
    let auc_top = mean(|s| s.auc_top);
    let var = chosen.iter().map(|s| (s.auc_top - auc_top).powi(2)).sum::<f64>() / n;
    Ok(ItScore {
        auc_top,
        auc_bottom: mean(|s| s.auc_bottom),
        f1s: mean(|s| s.f1s),
        auc_top_std: var.sqrt(),
        per_mask: per_mask.to_vec(),
        kept_masks: chosen.iter().map(|s| s.mask).collect(),
    })
}
