//! The coalition game behind every perturbation explainer: groups that are
//! "present" keep their original values, absent ones take the baseline.

use ndarray::{Array3, ArrayView2, ArrayViewMut2, Axis};

use super::FeatureGrouping;
use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::scalar::Scalar;

/// Inputs scored per model call.
const BATCH: usize = 64;

pub struct Game<'a, T, M: ?Sized> {
    pub model: &'a M,
    pub x: ArrayView2<'a, T>,
    pub baseline: ArrayView2<'a, T>,
    pub grouping: &'a FeatureGrouping,
    /// Class whose probability is the game's payoff.
    pub target: usize,
}

impl<'a, T: Scalar, M: Classifier<T> + ?Sized> Game<'a, T, M> {
    pub fn new(
        model: &'a M,
        x: ArrayView2<'a, T>,
        baseline: ArrayView2<'a, T>,
        grouping: &'a FeatureGrouping,
        target: usize,
    ) -> Result<Self> {
        if x.dim() != grouping.shape() || baseline.dim() != grouping.shape() {
            return Err(Error::Dimension(format!(
                "instance {:?} / baseline {:?} do not match the grouping {:?}",
                x.dim(),
                baseline.dim(),
                grouping.shape()
            )));
        }
        if target >= model.n_classes() {
            return Err(Error::Validation(format!(
                "target class {target} outside [0, {})",
                model.n_classes()
            )));
        }
        Ok(Self {
            model,
            x,
            baseline,
            grouping,
            target,
        })
    }

    pub fn n_players(&self) -> usize {
        self.grouping.n_groups()
    }

    /// Score `n` inputs produced in order by `fill(k, row)`. Rows arrive
    /// zeroed; `fill` writes the complete input.
    pub fn score_with<F>(&self, n: usize, mut fill: F) -> Result<Vec<T>>
    where
        F: FnMut(usize, &mut ArrayViewMut2<'_, T>),
    {
        let (d, l) = self.grouping.shape();
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        while start < n {
            let b = BATCH.min(n - start);
            let mut batch = Array3::zeros((b, d, l));
            for (j, mut row) in batch.axis_iter_mut(Axis(0)).enumerate() {
                fill(start + j, &mut row);
            }
            let p = self.model.predict_proba(batch.view())?;
            out.extend(p.column(self.target).iter().copied());
            start += b;
        }
        Ok(out)
    }

    /// Write the input for the coalition `present` into `dst`.
    pub fn fill_coalition(&self, present: impl Fn(usize) -> bool, dst: &mut ArrayViewMut2<'_, T>) {
        dst.assign(&self.baseline);
        for g in 0..self.n_players() {
            if present(g) {
                self.grouping.copy_group(g, self.x, dst);
            }
        }
    }

    /// `v(S)` for coalitions given as bitmasks (at most 64 players).
    pub fn values_masks(&self, masks: &[u64]) -> Result<Vec<T>> {
        self.score_with(masks.len(), |k, dst| {
            self.fill_coalition(|g| masks[k] >> g & 1 == 1, dst)
        })
    }

    /// `(v(full), v(empty))`: the clean score and the all-baseline score.
    pub fn endpoints(&self) -> Result<(T, T)> {
        let v = self.score_with(2, |k, dst| {
            if k == 0 {
                dst.assign(&self.x)
            } else {
                dst.assign(&self.baseline)
            }
        })?;
        Ok((v[0], v[1]))
    }
}
