//! Replacing the most and least attributed points of one instance.

use ndarray::{Array2, ArrayView2};

use crate::error::Result;
use crate::masks::{replacement_matrix, MaskKind, MaskStats};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Flat indices of the positive attributions, most important first. Ties
/// keep row-major order (channel, then time).
pub fn positive_order<T: Scalar>(saliency: ArrayView2<'_, T>) -> Vec<usize> {
    let flat: Vec<T> = saliency.iter().copied().collect();
    let mut idx: Vec<usize> = (0..flat.len()).filter(|&j| flat[j] > T::zero()).collect();
    idx.sort_by(|&a, &b| flat[b].partial_cmp(&flat[a]).expect("finite saliency"));
    idx
}

/// `⌈k·|P|⌉`, guarded against the product landing a hair above an integer.
pub fn top_count(k: f64, positives: usize) -> usize {
    let raw = (k * positives as f64 - 1e-9).ceil().max(0.0) as usize;
    raw.min(positives)
}

/// Which end of the attribution order is replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The `⌈k·|P|⌉` highest positive attributions.
    Top,
    /// The remaining positive attributions.
    Bottom,
}

/// Replace one side of the order with `replacement` values. Returns the
/// perturbed instance and the replaced fraction `ñ` of all `d·L` points.
pub fn perturb_with<T: Scalar>(
    x: ArrayView2<'_, T>,
    order: &[usize],
    k: f64,
    side: Side,
    replacement: ArrayView2<'_, T>,
) -> (Array2<T>, f64) {
    let cut = top_count(k, order.len());
    let chosen = match side {
        Side::Top => &order[..cut],
        Side::Bottom => &order[cut..],
    };
    let mut out = x.to_owned();
    let l = x.ncols();
    for &j in chosen {
        let (c, t) = (j / l, j % l);
        out[[c, t]] = replacement[[c, t]];
    }
    (out, chosen.len() as f64 / x.len() as f64)
}

/// Perturb the top `k`-quantile of the positive attributions, drawing the
/// replacement values from `mask`.
pub fn perturb_top<T: Scalar>(
    x: ArrayView2<'_, T>,
    saliency: ArrayView2<'_, T>,
    k: f64,
    mask: MaskKind,
    stats: Option<&MaskStats<T>>,
    rng: &mut Rng,
) -> Result<(Array2<T>, f64)> {
    let r = replacement_matrix(mask, stats, x.nrows(), x.ncols(), rng)?;
    Ok(perturb_with(x, &positive_order(saliency), k, Side::Top, r.view()))
}

/// Perturb the positive attributions outside the top `k`-quantile.
pub fn perturb_bottom<T: Scalar>(
    x: ArrayView2<'_, T>,
    saliency: ArrayView2<'_, T>,
    k: f64,
    mask: MaskKind,
    stats: Option<&MaskStats<T>>,
    rng: &mut Rng,
) -> Result<(Array2<T>, f64)> {
    let r = replacement_matrix(mask, stats, x.nrows(), x.ncols(), rng)?;
    Ok(perturb_with(x, &positive_order(saliency), k, Side::Bottom, r.view()))
}
