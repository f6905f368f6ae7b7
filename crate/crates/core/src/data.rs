//! Dataset, saliency and ground-truth containers.
//!
//! Every tensor is laid out `[instance][channel][time]`.

use std::fmt;

use ndarray::{Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One invariant violation found by [`MtsDataset::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyDimension { n: usize, d: usize, l: usize },
    NoClasses,
    LabelCount { labels: usize, instances: usize },
    LabelOutOfRange { instance: usize, label: i64, n_classes: usize },
    NonFinite { instance: usize, channel: usize, time: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDimension { n, d, l } => {
                write!(f, "empty dimension in shape ({n}, {d}, {l})")
            }
            Violation::NoClasses => f.write_str("n_classes must be at least 1"),
            Violation::LabelCount { labels, instances } => {
                write!(f, "{labels} labels for {instances} instances")
            }
            Violation::LabelOutOfRange {
                instance,
                label,
                n_classes,
            } => write!(
                f,
                "label {label} of instance {instance} outside [0, {n_classes})"
            ),
            Violation::NonFinite {
                instance,
                channel,
                time,
            } => write!(
                f,
                "non-finite value at (instance {instance}, channel {channel}, time {time})"
            ),
        }
    }
}

/// N instances of a `d × L` multivariate series with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MtsDataset<T> {
    data: Array3<T>,
    labels: Vec<usize>,
    n_classes: usize,
    name: String,
    split: Split,
}

impl<T: Scalar> MtsDataset<T> {
    /// Build a dataset, rejecting it if any invariant is broken.
    pub fn new(
        data: Array3<T>,
        labels: Vec<usize>,
        n_classes: usize,
        name: impl Into<String>,
        split: Split,
    ) -> Result<Self> {
        let ds = Self::from_raw(data, labels, n_classes, name, split);
        let report = ds.validate();
        if report.is_empty() {
            Ok(ds)
        } else {
            let shown: Vec<String> = report.iter().take(5).map(|v| v.to_string()).collect();
            Err(Error::Validation(format!(
                "{} violation(s): {}",
                report.len(),
                shown.join("; ")
            )))
        }
    }

    /// Build without checking; pair with [`validate`](Self::validate).
    pub fn from_raw(
        data: Array3<T>,
        labels: Vec<usize>,
        n_classes: usize,
        name: impl Into<String>,
        split: Split,
    ) -> Self {
        Self {
            data,
            labels,
            n_classes,
            name: name.into(),
            split,
        }
    }

    /// List every broken invariant. An empty report means the dataset is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let (n, d, l) = self.data.dim();
        if n == 0 || d == 0 || l == 0 {
            out.push(Violation::EmptyDimension { n, d, l });
        }
        if self.n_classes == 0 {
            out.push(Violation::NoClasses);
        }
        if self.labels.len() != n {
            out.push(Violation::LabelCount {
                labels: self.labels.len(),
                instances: n,
            });
        }
        for (instance, &label) in self.labels.iter().enumerate() {
            if label >= self.n_classes {
                out.push(Violation::LabelOutOfRange {
                    instance,
                    label: label as i64,
                    n_classes: self.n_classes,
                });
            }
        }
        for ((instance, channel, time), v) in self.data.indexed_iter() {
            if !v.is_finite() {
                out.push(Violation::NonFinite {
                    instance,
                    channel,
                    time,
                });
            }
        }
        out
    }

    pub fn data(&self) -> ArrayView3<'_, T> {
        self.data.view()
    }

    pub fn into_data(self) -> Array3<T> {
        self.data
    }

    pub fn instance(&self, i: usize) -> ArrayView2<'_, T> {
        self.data.index_axis(Axis(0), i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_instances(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn length(&self) -> usize {
        self.data.dim().2
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Keep only the given instances, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_instances()) {
            return Err(Error::Config(format!(
                "instance index {bad} out of range for {} instances",
                self.n_instances()
            )));
        }
        Ok(Self {
            data: self.data.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            name: self.name.clone(),
            split: self.split,
        })
    }

    /// The first `n` instances (all of them if `n` exceeds the size).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.n_instances())).collect();
        self.select(&idx).expect("indices in range")
    }

    /// Same labels and metadata with a replacement data tensor of identical shape.
    pub fn with_data(&self, data: Array3<T>) -> Result<Self> {
        if data.dim() != self.data.dim() {
            return Err(Error::Dimension(format!(
                "replacement data shape {:?} differs from {:?}",
                data.dim(),
                self.data.dim()
            )));
        }
        Ok(Self {
            data,
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            name: self.name.clone(),
            split: self.split,
        })
    }

    /// Convert the element type, e.g. to run the pipeline in `f32`.
    pub fn cast<U: Scalar>(&self) -> MtsDataset<U> {
        MtsDataset {
            data: self.data.mapv(|v| U::from_f64_lossy(v.to_f64_lossy())),
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            name: self.name.clone(),
            split: self.split,
        }
    }

    /// Per-class instance counts, indexed by class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            if l < counts.len() {
                counts[l] += 1;
            }
        }
        counts
    }
}

/// Attribution tensor `W` with the same shape as the data it explains.
#[derive(Debug, Clone, PartialEq)]
pub struct Saliency<T> {
    pub values: Array3<T>,
    pub method: String,
    pub normalized: bool,
}

impl<T: Scalar> Saliency<T> {
    pub fn new(values: Array3<T>, method: impl Into<String>) -> Self {
        Self {
            values,
            method: method.into(),
            normalized: false,
        }
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.values.dim()
    }

    pub fn instance(&self, i: usize) -> ArrayView2<'_, T> {
        self.values.index_axis(Axis(0), i)
    }

    /// The first `n` instances (all of them if `n` exceeds the count).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.values.dim().0);
        Self {
            values: self.values.slice(ndarray::s![..n, .., ..]).to_owned(),
            method: self.method.clone(),
            normalized: self.normalized,
        }
    }

    pub(crate) fn check_shape<U>(&self, ds: &MtsDataset<U>) -> Result<()>
    where
        U: Scalar,
    {
        if self.values.dim() != ds.data().dim() {
            return Err(Error::Dimension(format!(
                "saliency shape {:?} does not match dataset shape {:?}",
                self.values.dim(),
                ds.data().dim()
            )));
        }
        Ok(())
    }
}

/// Clip each instance at zero and scale it so its maximum is exactly one.
///
/// Instances without any positive value become all zeros. Idempotent.
pub fn normalize_saliency<T: Scalar>(s: &Saliency<T>) -> Result<Saliency<T>> {
    let mut values = s.values.clone();
    for (i, mut inst) in values.axis_iter_mut(Axis(0)).enumerate() {
        if inst.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "saliency instance {i} contains a non-finite value"
            )));
        }
        let max = inst.iter().fold(T::zero(), |m, &v| m.max(v));
        if max > T::zero() {
            inst.mapv_inplace(|v| if v > T::zero() { v / max } else { T::zero() });
        } else {
            inst.fill(T::zero());
        }
    }
    Ok(Saliency {
        values,
        method: s.method.clone(),
        normalized: true,
    })
}

/// Binary matrix marking the truly discriminative coordinates of each instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMask {
    values: Array3<u8>,
}

impl GroundTruthMask {
    pub fn new(values: Array3<u8>) -> Result<Self> {
        if let Some(((i, c, t), v)) = values.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(Error::Validation(format!(
                "ground truth value {v} at ({i}, {c}, {t}) is not binary"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> ArrayView3<'_, u8> {
        self.values.view()
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.values.dim()
    }

    pub fn instance(&self, i: usize) -> ArrayView2<'_, u8> {
        self.values.index_axis(Axis(0), i)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), indices),
        }
    }

    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.values.dim().0)).collect();
        self.select(&idx)
    }

    /// Ground truth rendered as a saliency map (ones on discriminative points).
    pub fn to_saliency<T: Scalar>(&self) -> Saliency<T> {
        Saliency {
            values: self.values.mapv(|v| if v > 0 { T::one() } else { T::zero() }),
            method: "ground_truth".into(),
            normalized: true,
        }
    }
}
