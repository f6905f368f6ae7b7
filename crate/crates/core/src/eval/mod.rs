//! Perturbation-based evaluation of saliency maps.

mod curve;
mod filter;
mod gt;
mod perturb;
pub mod report;
mod suite;

pub use curve::{
    area_under, auc_bottom, auc_top, build_curve, eval_replacement, f1s, AucOptions, CurveSample, PerturbationCurve,
    QuantileSchedule, SCORE_EPS,
};
pub use filter::{aggregate, clears_margin, filter_masks, margin_threshold, FilterMode, ItScore, MaskDecision, MaskScore};
pub use gt::{average_precision, gt_metrics, roc_auc, GtScore};
pub use perturb::{perturb_bottom, perturb_top, perturb_with, positive_order, top_count, Side};
pub use suite::{
    compute_saliencies, evaluate_saliencies, evaluate_suite, ChunkOutcome, CurveRecord, SaliencyRun, ScoreRow,
    SuiteConfig, SuiteReport, AGGREGATE_MASK, AVERAGE_CHUNK, RANDOM_CHUNK,
};
