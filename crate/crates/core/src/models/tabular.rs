use ndarray::{Array2, ArrayView3};

use super::{check_batch_shape, flatten_batch, Classifier, RidgeHead};
use crate::data::MtsDataset;
use crate::error::Result;
use crate::scalar::Scalar;

/// Ridge classifier over the flattened `d·L` input, ignoring temporal order.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularRidgeModel<T> {
    pub(crate) d: usize,
    pub(crate) l: usize,
    pub(crate) head: RidgeHead<T>,
}

impl<T: Scalar> TabularRidgeModel<T> {
    pub fn head(&self) -> &RidgeHead<T> {
        &self.head
    }
}

pub fn train_tabular<T: Scalar>(ds: &MtsDataset<T>, lambda: f64) -> Result<TabularRidgeModel<T>> {
    let features = flatten_batch(ds.data());
    let head = RidgeHead::fit(features.view(), ds.labels(), ds.n_classes(), lambda)?;
    Ok(TabularRidgeModel {
        d: ds.n_channels(),
        l: ds.length(),
        head,
    })
}

impl<T: Scalar> Classifier<T> for TabularRidgeModel<T> {
    fn n_classes(&self) -> usize {
        self.head.n_classes()
    }

    fn input_shape(&self) -> Option<(usize, usize)> {
        Some((self.d, self.l))
    }

    fn predict_proba(&self, batch: ArrayView3<'_, T>) -> Result<Array2<T>> {
        check_batch_shape(self.input_shape(), batch.dim())?;
        match batch.as_slice() {
            Some(flat) => {
                let (n, d, l) = batch.dim();
                let view = ndarray::ArrayView2::from_shape((n, d * l), flat).expect("contiguous batch");
                self.head.proba(view)
            }
            None => self.head.proba(flatten_batch(batch).view()),
        }
    }
}
