//! Perturbation-based saliency maps for multivariate time series
//! classifiers, their evaluation under multiple replacement masks and
//! against ground truth, and saliency-driven channel selection.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`, the precision of the on-disk
//! format.

pub mod attrib;
pub mod channels;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod masks;
pub mod models;
pub mod rng;
pub mod scalar;
pub mod synth;

pub use channels::{ChannelImportance, SelectionReport};
pub use data::{normalize_saliency, GroundTruthMask, MtsDataset, Saliency, Split, Violation};
pub use error::{Error, Result};
pub use eval::{SuiteConfig, SuiteReport};
pub use masks::{fit_stats, MaskKind, MaskStats};
pub use models::{Classifier, Model, ScoreTarget};
pub use scalar::Scalar;

pub type Dataset = MtsDataset<f64>;
pub type SaliencyMap = Saliency<f64>;
pub type Stats = MaskStats<f64>;
pub type Classifier64 = Model<f64>;
