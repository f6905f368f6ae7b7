//! Classifier abstraction and the built-in trainable classifiers.

mod persist;
mod ridge;
mod rocket;
mod tabular;

use ndarray::{s, Array2, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::data::MtsDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use persist::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use ridge::RidgeHead;
pub use rocket::{train_random_kernel, Kernel, RandomKernelModel, KERNEL_LENGTHS};
pub use tabular::{train_tabular, TabularRidgeModel};

/// A probabilistic classifier over `d × L` inputs.
///
/// `predict_proba` maps a batch `N × d × L` to a row-stochastic `N × C`
/// matrix and must be a pure function of the model and its input.
pub trait Classifier<T: Scalar>: Send + Sync {
    fn n_classes(&self) -> usize;

    /// Expected `(d, L)`, or `None` when the model accepts any shape.
    fn input_shape(&self) -> Option<(usize, usize)>;

    fn predict_proba(&self, batch: ArrayView3<'_, T>) -> Result<Array2<T>>;
}

impl<T: Scalar, C: Classifier<T> + ?Sized> Classifier<T> for &C {
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }
    fn input_shape(&self) -> Option<(usize, usize)> {
        (**self).input_shape()
    }
    fn predict_proba(&self, batch: ArrayView3<'_, T>) -> Result<Array2<T>> {
        (**self).predict_proba(batch)
    }
}

impl<T: Scalar, C: Classifier<T> + ?Sized> Classifier<T> for Box<C> {
    fn n_classes(&self) -> usize {
        (**self).n_classes()
    }
    fn input_shape(&self) -> Option<(usize, usize)> {
        (**self).input_shape()
    }
    fn predict_proba(&self, batch: ArrayView3<'_, T>) -> Result<Array2<T>> {
        (**self).predict_proba(batch)
    }
}

pub(crate) fn check_batch_shape(
    expected: Option<(usize, usize)>,
    batch: (usize, usize, usize),
) -> Result<()> {
    match expected {
        Some((d, l)) if (d, l) != (batch.1, batch.2) => Err(Error::Dimension(format!(
            "model expects {d} x {l} inputs, batch is {} x {}",
            batch.1, batch.2
        ))),
        _ => Ok(()),
    }
}

/// Index of the largest entry per row; ties go to the lowest class index.
pub fn argmax_rows<T: Scalar>(proba: ArrayView2<'_, T>) -> Vec<usize> {
    proba
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Row-wise softmax with temperature 1.
pub fn softmax_rows<T: Scalar>(scores: &mut Array2<T>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Predict in fixed-size slices to bound peak memory. Output is identical to
/// a single call because rows are processed independently.
pub fn predict_proba_chunked<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    batch: ArrayView3<'_, T>,
    chunk: usize,
) -> Result<Array2<T>> {
    let n = batch.dim().0;
    let chunk = chunk.max(1);
    if n <= chunk {
        return model.predict_proba(batch);
    }
    let mut out = Array2::zeros((n, model.n_classes()));
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let p = model.predict_proba(batch.slice(s![start..end, .., ..]))?;
        out.slice_mut(s![start..end, ..]).assign(&p);
        start = end;
    }
    Ok(out)
}

pub fn predict<T: Scalar, M: Classifier<T> + ?Sized>(model: &M, ds: &MtsDataset<T>) -> Result<Vec<usize>> {
    let proba = predict_proba_chunked(model, ds.data(), 256)?;
    Ok(argmax_rows(proba.view()))
}

/// Fraction of instances whose argmax prediction equals the label.
pub fn accuracy<T: Scalar, M: Classifier<T> + ?Sized>(model: &M, ds: &MtsDataset<T>) -> Result<f64> {
    let pred = predict(model, ds)?;
    let hits = pred.iter().zip(ds.labels()).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / ds.n_instances() as f64)
}

/// Which class probability serves as the score `S(X)` being explained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreTarget {
    /// The class the model predicts on the unperturbed input.
    #[default]
    Predicted,
    /// The true label.
    TrueLabel,
}

/// Resolve the class whose probability is tracked for every instance.
pub fn target_classes<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    ds: &MtsDataset<T>,
    target: ScoreTarget,
) -> Result<Vec<usize>> {
    match target {
        ScoreTarget::Predicted => predict(model, ds),
        ScoreTarget::TrueLabel => Ok(ds.labels().to_vec()),
    }
}

/// Built-in classifiers behind one type, for persistence and CLI dispatch.
#[derive(Debug, Clone, PartialEq)]
pub enum Model<T> {
    Tabular(TabularRidgeModel<T>),
    RandomKernel(RandomKernelModel<T>),
}

impl<T: Scalar> Model<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Tabular(_) => "tabular",
            Model::RandomKernel(_) => "random_kernel",
        }
    }
}

impl<T: Scalar> Classifier<T> for Model<T> {
    fn n_classes(&self) -> usize {
        match self {
            Model::Tabular(m) => m.n_classes(),
            Model::RandomKernel(m) => m.n_classes(),
        }
    }

    fn input_shape(&self) -> Option<(usize, usize)> {
        match self {
            Model::Tabular(m) => m.input_shape(),
            Model::RandomKernel(m) => m.input_shape(),
        }
    }

    fn predict_proba(&self, batch: ArrayView3<'_, T>) -> Result<Array2<T>> {
        match self {
            Model::Tabular(m) => m.predict_proba(batch),
            Model::RandomKernel(m) => m.predict_proba(batch),
        }
    }
}

pub(crate) fn flatten_batch<T: Scalar>(batch: ArrayView3<'_, T>) -> Array2<T> {
    let (n, d, l) = batch.dim();
    let mut out = Array2::zeros((n, d * l));
    for (i, inst) in batch.axis_iter(Axis(0)).enumerate() {
        let mut row = out.row_mut(i);
        for (dst, &v) in row.iter_mut().zip(inst.iter()) {
            *dst = v;
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod stub {
    //! Hand-built classifiers with known scores, for exact checks.

    use super::*;

    /// Two-class model whose class-1 probability is the affine score
    /// `bias + Σ w_i x_i` clamped into `[0, 1]`.
    pub struct LinearProb<T> {
        pub weights: Array2<T>,
        pub bias: T,
    }

    impl<T: Scalar> Classifier<T> for LinearProb<T> {
        fn n_classes(&self) -> usize {
            2
        }
        fn input_shape(&self) -> Option<(usize, usize)> {
            Some(self.weights.dim())
        }
        fn predict_proba(&self, batch: ArrayView3<'_, T>) -> Result<Array2<T>> {
            check_batch_shape(self.input_shape(), batch.dim())?;
            let mut out = Array2::zeros((batch.dim().0, 2));
            for (i, x) in batch.axis_iter(Axis(0)).enumerate() {
                let f = (&x * &self.weights).sum() + self.bias;
                let p = f.max(T::zero()).min(T::one());
                out[[i, 1]] = p;
                out[[i, 0]] = T::one() - p;
            }
            Ok(out)
        }
    }

    /// Two-class logistic model: `P(1) = σ(bias + Σ w_i x_i)`.
    pub struct Logistic<T> {
        pub weights: Array2<T>,
        pub bias: T,
    }

    impl<T: Scalar> Classifier<T> for Logistic<T> {
        fn n_classes(&self) -> usize {
            2
        }
        fn input_shape(&self) -> Option<(usize, usize)> {
            Some(self.weights.dim())
        }
        fn predict_proba(&self, batch: ArrayView3<'_, T>) -> Result<Array2<T>> {
            check_batch_shape(self.input_shape(), batch.dim())?;
            let mut out = Array2::zeros((batch.dim().0, 2));
            for (i, x) in batch.axis_iter(Axis(0)).enumerate() {
                let z = (&x * &self.weights).sum() + self.bias;
                let p = T::one() / (T::one() + (-z).exp());
                out[[i, 1]] = p;
                out[[i, 0]] = T::one() - p;
            }
            Ok(out)
        }
    }

    /// Uniform probabilities over `classes`.
    pub struct Uniform {
        pub classes: usize,
    }

    impl<T: Scalar> Classifier<T> for Uniform {
        fn n_classes(&self) -> usize {
            self.classes
        }
        fn input_shape(&self) -> Option<(usize, usize)> {
            None
        }
        fn predict_proba(&self, batch: ArrayView3<'_, T>) -> Result<Array2<T>> {
            let p = T::one() / T::from_usize_lossy(self.classes);
            Ok(Array2::from_elem((batch.dim().0, self.classes), p))
        }
    }

    /// Reads the label off the sign of the first coordinate.
    pub struct SignOracle;

    impl<T: Scalar> Classifier<T> for SignOracle {
        fn n_classes(&self) -> usize {
            2
        }
        fn input_shape(&self) -> Option<(usize, usize)> {
            None
        }
        fn predict_proba(&self, batch: ArrayView3<'_, T>) -> Result<Array2<T>> {
            let mut out = Array2::zeros((batch.dim().0, 2));
            for (i, x) in batch.axis_iter(Axis(0)).enumerate() {
                let c = usize::from(x[[0, 0]] > T::zero());
                out[[i, c]] = T::one();
            }
            Ok(out)
        }
    }
}
