//! Model-agnostic perturbation attributions, point-wise or over chunks.

mod ablation;
mod game;
mod grouping;
mod kernel_shap;
mod shapley;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{MtsDataset, Saliency};
use crate::error::{Error, Result};
use crate::masks::{replacement_matrix, MaskKind, MaskStats};
use crate::models::Classifier;
use crate::rng::{self, domain};
use crate::scalar::Scalar;

pub use ablation::{feature_ablation, feature_permutation};
pub use game::Game;
pub use grouping::{chunk_bounds, make_grouping, ChunkGrouping, ChunkSpec, FeatureGrouping, Segment};
pub use kernel_shap::{default_samples, kernel_shap};
pub use shapley::{exact_shapley, shapley_sampling, Permutations, MAX_ENUMERATED_GROUPS, MAX_EXACT_GROUPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "feature_ablation")]
    FeatureAblation,
    #[serde(rename = "feature_permutation")]
    FeaturePermutation,
    #[serde(rename = "shap_sampling")]
    ShapleySampling,
    #[serde(rename = "kernel_shap")]
    KernelShap,
    #[serde(rename = "random")]
    Random,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::FeatureAblation,
        Method::FeaturePermutation,
        Method::ShapleySampling,
        Method::KernelShap,
        Method::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::FeatureAblation => "feature_ablation",
            Method::FeaturePermutation => "feature_permutation",
            Method::ShapleySampling => "shap_sampling",
            Method::KernelShap => "kernel_shap",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
            Error::Config(format!("unknown method {s:?}; valid methods: {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionConfig {
    pub method: Method,
    /// Values taken by "absent" groups.
    pub baseline: MaskKind,
    pub n_permutations: usize,
    /// KernelSHAP coalition budget; `None` is `2·G + 2048`.
    pub n_samples: Option<usize>,
    pub seed: u64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            method: Method::FeatureAblation,
            baseline: MaskKind::Zeros,
            n_permutations: 25,
            n_samples: None,
            seed: 0,
        }
    }
}

impl AttributionConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            seed,
            ..Self::default()
        }
    }
}

/// The baseline of instance `index`, drawn from its own stream.
pub fn baseline_matrix<T: Scalar>(
    kind: MaskKind,
    stats: Option<&MaskStats<T>>,
    d: usize,
    l: usize,
    seed: u64,
    index: usize,
) -> Result<Array2<T>> {
    let mut r = rng::substream(seed, domain::BASELINE, &[index as u64]);
    replacement_matrix(kind, stats, d, l, &mut r)
}

/// I.i.d. uniform `[0, 1)` attributions; instance `i` uses stream `(seed, i)`.
pub fn random_attribution<T: Scalar>(shape: (usize, usize, usize), seed: u64) -> Saliency<T> {
    let (n, d, l) = shape;
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(seed, domain::RANDOM_SALIENCY, &[i as u64]);
            (0..d * l).map(|_| T::from_f64_lossy(r.random::<f64>())).collect()
        })
        .collect();
    let values = Array3::from_shape_vec(shape, rows.concat()).expect("n*d*l values");
    Saliency::new(values, Method::Random.name())
}

/// Spread per-group attributions (`N × G`) over the full `N × d × L` shape.
pub fn expand_to_saliency<T: Scalar>(
    attributions: &Array2<T>,
    grouping: &FeatureGrouping,
    method: &str,
) -> Result<Saliency<T>> {
    Ok(Saliency::new(ablation::expand_rows(attributions, grouping)?, method))
}

/// Explain every instance of `ds`, tracking class `targets[i]` for
/// instance `i`. Instances run in parallel on independent streams, so the
/// output does not depend on the thread count.
pub fn explain<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    ds: &MtsDataset<T>,
    targets: &[usize],
    spec: ChunkSpec,
    cfg: &AttributionConfig,
    stats: Option<&MaskStats<T>>,
) -> Result<Saliency<T>> {
    let (n, d, l) = ds.data().dim();
    if targets.len() != n {
        return Err(Error::Dimension(format!("{} targets for {n} instances", targets.len())));
    }
    if cfg.method == Method::Random {
        return Ok(random_attribution((n, d, l), cfg.seed));
    }
    if cfg.method == Method::ShapleySampling && cfg.n_permutations == 0 {
        return Err(Error::Config("n_permutations must be at least 1".into()));
    }
    if cfg.baseline.needs_stats() && stats.is_none() {
        return Err(Error::Config(format!("baseline {} needs fitted statistics", cfg.baseline)));
    }
    let grouping = make_grouping(d, l, spec)?;
    let rows: Array2<T> = if cfg.method == Method::FeaturePermutation {
        feature_permutation(model, ds.data(), targets, &grouping, cfg.seed)?
    } else {
        let n_samples = cfg.n_samples.unwrap_or_else(|| default_samples(grouping.n_groups()));
        let per_instance: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let base = baseline_matrix(cfg.baseline, stats, d, l, cfg.seed, i)?;
                let game = Game::new(model, ds.instance(i), base.view(), &grouping, targets[i])?;
                match cfg.method {
                    Method::FeatureAblation => feature_ablation(&game),
                    Method::ShapleySampling => {
                        let mut r = rng::substream(cfg.seed, domain::SHAPLEY, &[i as u64]);
                        shapley_sampling(&game, Permutations::Sampled(cfg.n_permutations), &mut r)
                    }
                    Method::KernelShap => {
                        let mut r = rng::substream(cfg.seed, domain::KERNEL_SHAP, &[i as u64]);
                        kernel_shap(&game, n_samples, &mut r)
                    }
                    Method::FeaturePermutation | Method::Random => unreachable!("handled above"),
                }
            })
            .collect::<Result<_>>()?;
        let mut rows = Array2::zeros((n, grouping.n_groups()));
        for (i, row) in per_instance.into_iter().enumerate() {
            rows.row_mut(i).assign(&ndarray::Array1::from(row));
        }
        rows
    };
    expand_to_saliency(&rows, &grouping, cfg.method.name())
}
