use ndarray::{Array2, Array3, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::game::Game;
use super::FeatureGrouping;
use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::rng::{self, domain};
use crate::scalar::Scalar;

/// Score drop when each group alone is replaced by the baseline:
/// `S(X) − S(X with g at baseline)`.
pub fn feature_ablation<T: Scalar, M: Classifier<T> + ?Sized>(game: &Game<'_, T, M>) -> Result<Vec<T>> {
    let g = game.n_players();
    let v = game.score_with(g + 1, |k, dst| {
        dst.assign(&game.x);
        if k > 0 {
            game.grouping.copy_group(k - 1, game.baseline, dst);
        }
    })?;
    Ok(v[1..].iter().map(|&s| v[0] - s).collect())
}

/// Batch-shuffle importance. For every group one uniform permutation `π` of
/// the instances is drawn from `(seed, group)`; instance `i` receives
/// `S_i(X_i) − S_i(X_i with g taken from X_π(i))`.
///
/// Returns one row of group attributions per instance.
pub fn feature_permutation<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    batch: ArrayView3<'_, T>,
    targets: &[usize],
    grouping: &FeatureGrouping,
    seed: u64,
) -> Result<Array2<T>> {
    let (n, d, l) = batch.dim();
    if n < 2 {
        return Err(Error::Config("feature permutation needs at least 2 instances".into()));
    }
    if (d, l) != grouping.shape() || targets.len() != n {
        return Err(Error::Dimension(format!(
            "batch {:?} with {} targets does not match the grouping {:?}",
            batch.dim(),
            targets.len(),
            grouping.shape()
        )));
    }
    let pick = |p: Array2<T>| -> Vec<T> { (0..n).map(|i| p[[i, targets[i]]]).collect() };
    let clean = pick(crate::models::predict_proba_chunked(model, batch, 256)?);

    let columns: Vec<Vec<T>> = (0..grouping.n_groups())
        .into_par_iter()
        .map(|g| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng::substream(seed, domain::PERMUTATION, &[g as u64]));
            let mut shuffled = batch.to_owned();
            for (i, mut inst) in shuffled.axis_iter_mut(Axis(0)).enumerate() {
                grouping.copy_group(g, batch.index_axis(Axis(0), perm[i]), &mut inst);
            }
            let scores = pick(model.predict_proba(shuffled.view())?);
            Ok(clean.iter().zip(scores).map(|(&c, s)| c - s).collect())
        })
        .collect::<Result<_>>()?;

    let mut out = Array2::zeros((n, grouping.n_groups()));
    for (g, col) in columns.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            out[[i, g]] = v;
        }
    }
    Ok(out)
}

/// Attributions for a whole batch as one saliency tensor.
pub(crate) fn expand_rows<T: Scalar>(rows: &Array2<T>, grouping: &FeatureGrouping) -> Result<Array3<T>> {
    let (d, l) = grouping.shape();
    let mut out = Array3::zeros((rows.nrows(), d, l));
    for (i, row) in rows.rows().into_iter().enumerate() {
        let m = grouping.expand(row.as_slice().expect("row-major"))?;
        out.index_axis_mut(Axis(0), i).assign(&m);
    }
    Ok(out)
}
