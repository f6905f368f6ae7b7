//! End-to-end evaluation: saliency per (method, chunking), curves per mask,
//! mask filtering against the random baseline, aggregation.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::curve::{auc_bottom, auc_top, build_curve, f1s, AucOptions, PerturbationCurve, QuantileSchedule};
use super::filter::{aggregate, clears_margin, filter_masks, margin_threshold, FilterMode, ItScore, MaskDecision, MaskScore};
use super::gt::{gt_metrics, GtScore};
use crate::attrib::{explain, random_attribution, AttributionConfig, ChunkSpec, Method};
use crate::data::{normalize_saliency, GroundTruthMask, MtsDataset, Saliency};
use crate::error::{Error, Result};
use crate::masks::{MaskKind, MaskStats};
use crate::models::{target_classes, Classifier, ScoreTarget};
use crate::scalar::Scalar;

pub const RANDOM_CHUNK: &str = "-";
pub const AGGREGATE_MASK: &str = "aggregate";
pub const AVERAGE_CHUNK: &str = "avg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    /// Explainers to run; the random baseline is always added.
    pub methods: Vec<Method>,
    pub masks: Vec<MaskKind>,
    pub chunks: Vec<ChunkSpec>,
    pub schedule: QuantileSchedule,
    pub margin: f64,
    pub filter_mode: FilterMode,
    pub auc: AucOptions,
    /// Replacement used inside the explainers.
    pub baseline: MaskKind,
    pub n_permutations: usize,
    pub n_samples: Option<usize>,
    pub target: ScoreTarget,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::FeatureAblation],
            masks: MaskKind::ALL.to_vec(),
            chunks: vec![ChunkSpec::chunks(10)],
            schedule: QuantileSchedule::default(),
            margin: 0.15,
            filter_mode: FilterMode::BestMethod,
            auc: AucOptions::default(),
            baseline: MaskKind::Zeros,
            n_permutations: 25,
            n_samples: None,
            target: ScoreTarget::Predicted,
            seed: 0,
        }
    }
}

impl SuiteConfig {
    pub fn attribution(&self, method: Method) -> AttributionConfig {
        AttributionConfig {
            method,
            baseline: self.baseline,
            n_permutations: self.n_permutations,
            n_samples: self.n_samples,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.masks.is_empty() {
            return Err(Error::Config("no masks selected".into()));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be a nonnegative number, got {}", self.margin)));
        }
        Ok(())
    }
}

/// A saliency map tagged with where it came from.
#[derive(Debug, Clone)]
pub struct SaliencyRun<T> {
    pub method: String,
    pub chunk: String,
    pub saliency: Saliency<T>,
    pub runtime_s: Option<f64>,
}

/// One line of `scores.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub method: String,
    pub chunk: String,
    pub mask: String,
    pub auc_top: Option<f64>,
    pub auc_bottom: Option<f64>,
    pub f1s: Option<f64>,
    pub ap: Option<f64>,
    pub roc: Option<f64>,
    pub runtime_s: Option<f64>,
    pub kept: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkOutcome {
    pub chunk: String,
    pub decisions: Vec<MaskDecision>,
    pub discarded: Vec<MaskKind>,
    /// Every mask was discarded; aggregates are undefined.
    pub flat_rank: bool,
    pub aggregates: BTreeMap<String, Option<ItScore>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub chunk: String,
    pub curve: PerturbationCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub dataset: String,
    pub n_instances: usize,
    pub clean_accuracy: f64,
    pub margin: f64,
    pub filter_mode: FilterMode,
    pub rows: Vec<ScoreRow>,
    pub outcomes: Vec<ChunkOutcome>,
    pub curves: Vec<CurveRecord>,
    pub gt: Vec<(String, String, GtScore)>,
}

impl SuiteReport {
    pub fn row(&self, method: &str, chunk: &str, mask: &str) -> Option<&ScoreRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.chunk == chunk && r.mask == mask)
    }

    pub fn outcome(&self, chunk: &str) -> Option<&ChunkOutcome> {
        self.outcomes.iter().find(|o| o.chunk == chunk)
    }
}

/// Compute the raw saliency of every (method, chunking) pair.
pub fn compute_saliencies<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    ds: &MtsDataset<T>,
    cfg: &SuiteConfig,
    stats: &MaskStats<T>,
) -> Result<Vec<SaliencyRun<T>>> {
    let targets = target_classes(model, ds, cfg.target)?;
    let mut runs = Vec::new();
    for &chunk in &cfg.chunks {
        for &method in cfg.methods.iter().filter(|&&m| m != Method::Random) {
            let start = Instant::now();
            let raw = explain(model, ds, &targets, chunk, &cfg.attribution(method), Some(stats))?;
            let runtime = start.elapsed().as_secs_f64();
            log::info!("{method} ({chunk}): {runtime:.2}s for {} instances", ds.n_instances());
            runs.push(SaliencyRun {
                method: method.name().into(),
                chunk: chunk.label(),
                saliency: raw,
                runtime_s: Some(runtime),
            });
        }
    }
    Ok(runs)
}

/// One chunking's aggregate, ground-truth score and runtime for a method.
type ChunkScores = (ItScore, Option<GtScore>, Option<f64>);

/// Evaluate saliencies (normalized here, raw or not) under every mask,
/// filter masks against the random baseline per chunking and aggregate the
/// survivors.
pub fn evaluate_saliencies<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    ds: &MtsDataset<T>,
    gt: Option<&GroundTruthMask>,
    runs: &[SaliencyRun<T>],
    cfg: &SuiteConfig,
    stats: &MaskStats<T>,
) -> Result<SuiteReport> {
    cfg.validate()?;
    let targets = target_classes(model, ds, cfg.target)?;
    let curve_of = |s: &Saliency<T>, mask| build_curve(model, ds, s, &targets, mask, Some(stats), &cfg.schedule, cfg.seed);
    let score_of = |c: &PerturbationCurve| {
        let (a, b) = (auc_top(c, cfg.auc), auc_bottom(c, cfg.auc));
        MaskScore {
            mask: c.mask,
            auc_top: a,
            auc_bottom: b,
            f1s: f1s(a, b),
        }
    };

    let random = normalize_saliency(&random_attribution(ds.data().dim(), cfg.seed))?;
    let mut curves = Vec::new();
    let mut random_scores = Vec::new();
    for &mask in &cfg.masks {
        let c = curve_of(&random, mask)?;
        random_scores.push(score_of(&c));
        curves.push(CurveRecord {
            chunk: RANDOM_CHUNK.into(),
            curve: c,
        });
    }
    let random_auc: BTreeMap<MaskKind, f64> = random_scores.iter().map(|s| (s.mask, s.auc_top)).collect();
    let random_name = Method::Random.name().to_string();
    let random_gt = gt.map(|g| gt_metrics(&random, g)).transpose()?;

    let mut gt_scores = Vec::new();
    if let Some(g) = &random_gt {
        gt_scores.push((random_name.clone(), RANDOM_CHUNK.to_string(), g.clone()));
    }
    let mut per_run: Vec<(Vec<MaskScore>, Option<GtScore>)> = Vec::new();
    for run in runs {
        let saliency = normalize_saliency(&run.saliency)?;
        let mut scores = Vec::new();
        for &mask in &cfg.masks {
            let c = curve_of(&saliency, mask)?;
            scores.push(score_of(&c));
            curves.push(CurveRecord {
                chunk: run.chunk.clone(),
                curve: c,
            });
        }
        let g = gt.map(|g| gt_metrics(&saliency, g)).transpose()?;
        if let Some(g) = &g {
            gt_scores.push((run.method.clone(), run.chunk.clone(), g.clone()));
        }
        per_run.push((scores, g));
    }

    // Chunk labels in first-seen order.
    let mut chunks: Vec<String> = Vec::new();
    for run in runs {
        if !chunks.contains(&run.chunk) {
            chunks.push(run.chunk.clone());
        }
    }
    if chunks.is_empty() {
        chunks.push(RANDOM_CHUNK.into());
    }

    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    let mut averages: BTreeMap<String, Vec<ChunkScores>> = BTreeMap::new();
    let mut method_order: Vec<String> = Vec::new();
    for chunk in &chunks {
        let members: Vec<usize> = (0..runs.len()).filter(|&r| &runs[r].chunk == chunk).collect();
        let by_method: BTreeMap<String, Vec<MaskScore>> = members
            .iter()
            .map(|&r| (runs[r].method.clone(), per_run[r].0.clone()))
            .collect();
        let decisions = if by_method.is_empty() {
            // Only the random baseline: nothing can clear the margin.
            random_scores
                .iter()
                .map(|s| MaskDecision {
                    mask: s.mask,
                    best_method: random_name.clone(),
                    best_auc_top: s.auc_top,
                    random_auc_top: s.auc_top,
                    threshold: margin_threshold(s.auc_top, cfg.margin),
                    kept: clears_margin(s.auc_top, s.auc_top, cfg.margin),
                })
                .collect()
        } else {
            filter_masks(&by_method, &random_auc, cfg.margin)?
        };
        let kept: Vec<MaskKind> = decisions.iter().filter(|d| d.kept).map(|d| d.mask).collect();
        let discarded: Vec<MaskKind> = decisions.iter().filter(|d| !d.kept).map(|d| d.mask).collect();
        for d in decisions.iter().filter(|d| !d.kept) {
            log::info!(
                "chunk {chunk}: mask {} discarded (best {} = {:.4} < threshold {:.4}, random {:.4}, margin {})",
                d.mask, d.best_method, d.best_auc_top, d.threshold, d.random_auc_top, cfg.margin
            );
        }
        let flat_rank = kept.is_empty();
        if flat_rank {
            log::warn!("chunk {chunk}: flat rank, every mask was discarded");
        }

        let mut aggregates = BTreeMap::new();
        let mut emit = |method: &str, scores: &[MaskScore], g: Option<&GtScore>, runtime: Option<f64>, own_kept: Vec<MaskKind>| {
            for s in scores {
                rows.push(ScoreRow {
                    method: method.into(),
                    chunk: chunk.clone(),
                    mask: s.mask.name().into(),
                    auc_top: Some(s.auc_top),
                    auc_bottom: Some(s.auc_bottom),
                    f1s: Some(s.f1s),
                    ap: None,
                    roc: None,
                    runtime_s: None,
                    kept: Some(own_kept.contains(&s.mask)),
                });
            }
            let agg = aggregate(scores, &own_kept).ok();
            rows.push(ScoreRow {
                method: method.into(),
                chunk: chunk.clone(),
                mask: AGGREGATE_MASK.into(),
                auc_top: agg.as_ref().map(|a| a.auc_top),
                auc_bottom: agg.as_ref().map(|a| a.auc_bottom),
                f1s: agg.as_ref().map(|a| a.f1s),
                ap: g.map(|g| g.ap),
                roc: g.map(|g| g.roc_auc),
                runtime_s: runtime,
                kept: None,
            });
            if let Some(a) = &agg {
                averages
                    .entry(method.to_string())
                    .or_default()
                    .push((a.clone(), g.cloned(), runtime));
            }
            if !method_order.iter().any(|m| m == method) {
                method_order.push(method.to_string());
            }
            aggregates.insert(method.to_string(), agg);
        };
        for &r in &members {
            let own_kept = match cfg.filter_mode {
                FilterMode::BestMethod => kept.clone(),
                FilterMode::PerMethod => per_run[r]
                    .0
                    .iter()
                    .filter(|s| clears_margin(s.auc_top, random_auc[&s.mask], cfg.margin))
                    .map(|s| s.mask)
                    .collect(),
            };
            emit(&runs[r].method, &per_run[r].0, per_run[r].1.as_ref(), runs[r].runtime_s, own_kept);
        }
        emit(&random_name, &random_scores, random_gt.as_ref(), None, kept.clone());

        outcomes.push(ChunkOutcome {
            chunk: chunk.clone(),
            decisions,
            discarded,
            flat_rank,
            aggregates,
        });
    }

    if chunks.len() > 1 {
        for method in &method_order {
            let Some(list) = averages.get(method) else { continue };
            let n = list.len() as f64;
            let mean = |f: &dyn Fn(&ChunkScores) -> Option<f64>| -> Option<f64> {
                let vals: Option<Vec<f64>> = list.iter().map(f).collect();
                vals.map(|v| v.iter().sum::<f64>() / n)
            };
            rows.push(ScoreRow {
                method: method.clone(),
                chunk: AVERAGE_CHUNK.into(),
                mask: AGGREGATE_MASK.into(),
                auc_top: mean(&|e| Some(e.0.auc_top)),
                auc_bottom: mean(&|e| Some(e.0.auc_bottom)),
                f1s: mean(&|e| Some(e.0.f1s)),
                ap: mean(&|e| e.1.as_ref().map(|g| g.ap)),
                roc: mean(&|e| e.1.as_ref().map(|g| g.roc_auc)),
                runtime_s: mean(&|e| e.2),
                kept: None,
            });
        }
    }

    let clean_accuracy = curves.first().map(|c| c.curve.clean_accuracy).unwrap_or(0.0);
    Ok(SuiteReport {
        dataset: ds.name().to_string(),
        n_instances: ds.n_instances(),
        clean_accuracy,
        margin: cfg.margin,
        filter_mode: cfg.filter_mode,
        rows,
        outcomes,
        curves,
        gt: gt_scores,
    })
}

/// [`compute_saliencies`] followed by [`evaluate_saliencies`].
pub fn evaluate_suite<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    ds: &MtsDataset<T>,
    gt: Option<&GroundTruthMask>,
    cfg: &SuiteConfig,
    stats: &MaskStats<T>,
) -> Result<SuiteReport> {
    cfg.validate()?;
    let runs = compute_saliencies(model, ds, cfg, stats)?;
    evaluate_saliencies(model, ds, gt, &runs, cfg, stats)
}
