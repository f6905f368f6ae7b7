use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::scalar::Scalar;

/// Closed-form multi-output ridge regression on one-hot targets over
/// standardized features, with softmax probabilities on top.
///
/// `weights` is `(p + 1) × C`: one row per standardized feature plus a final
/// intercept row. Features are centered, so the intercept is the per-class
/// target mean and is not penalized.
///
/// Standardization uses the population standard deviation, which makes the
/// fit on a training set duplicated `m` times with penalty `m·λ` identical to
/// the fit on the original set with `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeHead<T> {
    pub(crate) means: Array1<T>,
    /// `1 / std` per feature; zero for constant features, which are dropped.
    pub(crate) inv_stds: Array1<T>,
    pub(crate) weights: Array2<T>,
    pub(crate) lambda: f64,
    /// Standardization folded into the weights, for prediction.
    folded: Array2<T>,
    folded_bias: Array1<T>,
}

impl<T: Scalar> RidgeHead<T> {
    pub fn fit(features: ArrayView2<'_, T>, labels: &[usize], n_classes: usize, lambda: f64) -> Result<Self> {
        let (n, p) = features.dim();
        if labels.len() != n {
            return Err(Error::Dimension(format!("{} labels for {n} rows", labels.len())));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("ridge penalty must be positive, got {lambda}")));
        }
        if n < n_classes {
            return Err(Error::Config(format!(
                "need at least as many instances ({n}) as classes ({n_classes})"
            )));
        }
        let nf = T::from_usize_lossy(n);
        let means = features.sum_axis(Axis(0)).mapv(|s| s / nf);
        let mut inv_stds = Array1::zeros(p);
        let mut dropped = 0usize;
        for j in 0..p {
            let col = features.column(j);
            let m = means[j];
            let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / nf;
            let std = var.sqrt();
            let floor = T::from_f64_lossy(1e-9) * (T::one() + m.abs());
            if std > floor {
                inv_stds[j] = T::one() / std;
            } else {
                dropped += 1;
            }
        }
        if dropped > 0 {
            log::warn!("ridge: dropped {dropped} constant feature(s) of {p}");
        }

        let mut z = features.to_owned();
        for mut row in z.rows_mut() {
            for j in 0..p {
                row[j] = (row[j] - means[j]) * inv_stds[j];
            }
        }

        let mut y = Array2::zeros((n, n_classes));
        for (i, &l) in labels.iter().enumerate() {
            if l >= n_classes {
                return Err(Error::Validation(format!("label {l} outside [0, {n_classes})")));
            }
            y[[i, l]] = T::one();
        }
        let y_mean = y.sum_axis(Axis(0)).mapv(|s| s / nf);
        let yc = &y - &y_mean.view().insert_axis(Axis(0));

        let lam = T::from_f64_lossy(lambda);
        let coef = if p <= n {
            let mut gram = z.t().dot(&z);
            for j in 0..p {
                gram[[j, j]] = gram[[j, j]] + lam;
            }
            let rhs = z.t().dot(&yc);
            solve_spd(gram.view(), rhs.view())?
        } else {
            let mut gram = z.dot(&z.t());
            for i in 0..n {
                gram[[i, i]] = gram[[i, i]] + lam;
            }
            let alpha = solve_spd(gram.view(), yc.view())?;
            z.t().dot(&alpha)
        };

        let mut weights = Array2::zeros((p + 1, n_classes));
        weights.slice_mut(ndarray::s![..p, ..]).assign(&coef);
        weights.row_mut(p).assign(&y_mean);
        Ok(Self::from_parts(means, inv_stds, weights, lambda))
    }

    pub(crate) fn from_parts(means: Array1<T>, inv_stds: Array1<T>, weights: Array2<T>, lambda: f64) -> Self {
        let p = means.len();
        let c = weights.ncols();
        let mut folded = Array2::zeros((p, c));
        let mut folded_bias = weights.row(p).to_owned();
        for j in 0..p {
            for k in 0..c {
                let w = weights[[j, k]] * inv_stds[j];
                folded[[j, k]] = w;
                folded_bias[k] = folded_bias[k] - means[j] * w;
            }
        }
        Self {
            means,
            inv_stds,
            weights,
            lambda,
            folded,
            folded_bias,
        }
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn n_classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weights(&self) -> ArrayView2<'_, T> {
        self.weights.view()
    }

    /// Raw ridge scores, `N × C`.
    pub fn scores(&self, features: ArrayView2<'_, T>) -> Result<Array2<T>> {
        if features.ncols() != self.n_features() {
            return Err(Error::Dimension(format!(
                "ridge head expects {} features, got {}",
                self.n_features(),
                features.ncols()
            )));
        }
        Ok(features.dot(&self.folded) + self.folded_bias.view().insert_axis(Axis(0)))
    }

    pub fn proba(&self, features: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let mut s = self.scores(features)?;
        super::softmax_rows(&mut s);
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{concatenate, Array2};

    fn toy() -> (Array2<f64>, Vec<usize>) {
        let x = Array2::from_shape_fn((12, 3), |(i, j)| ((i * 5 + j * 3) % 7) as f64 - 3.0 + (i % 2) as f64 * 2.0 * (j == 0) as u8 as f64);
        let y = (0..12).map(|i| i % 2).collect();
        (x, y)
    }

    #[test]
    fn duplicated_training_set_matches_rescaled_penalty() {
        let (x, y) = toy();
        let a = RidgeHead::fit(x.view(), &y, 2, 0.7).unwrap();
        let x2 = concatenate![Axis(0), x, x];
        let y2: Vec<usize> = y.iter().chain(y.iter()).copied().collect();
        let b = RidgeHead::fit(x2.view(), &y2, 2, 1.4).unwrap();
        for (u, v) in a.weights.iter().zip(b.weights.iter()) {
            assert!((u - v).abs() < 1e-10, "{u} vs {v}");
        }
    }

    #[test]
    fn primal_and_dual_agree() {
        // p > n takes the dual route; compare against the primal on a transposed-size problem.
        let x = Array2::from_shape_fn((5, 8), |(i, j)| ((i * 3 + j * 7) % 11) as f64 * 0.3 - 1.0 + (i * j) as f64 * 0.01);
        let y = vec![0, 1, 0, 1, 1];
        let dual = RidgeHead::fit(x.view(), &y, 2, 0.5).unwrap();
        // Primal on the same problem, forced by solving the p x p system directly.
        let z = (&x - &dual.means.view().insert_axis(Axis(0))) * dual.inv_stds.view().insert_axis(Axis(0));
        let mut gram = z.t().dot(&z);
        for j in 0..8 {
            gram[[j, j]] += 0.5;
        }
        let mut yc = Array2::zeros((5, 2));
        for (i, &l) in y.iter().enumerate() {
            yc[[i, l]] = 1.0;
        }
        let ym = yc.sum_axis(Axis(0)) / 5.0;
        let yc = &yc - &ym.view().insert_axis(Axis(0));
        let primal = solve_spd(gram.view(), z.t().dot(&yc).view()).unwrap();
        for j in 0..8 {
            for k in 0..2 {
                assert!((primal[[j, k]] - dual.weights[[j, k]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn huge_penalty_gives_prevalence_scores() {
        let (x, y) = toy();
        let h = RidgeHead::fit(x.view(), &y, 2, 1e12).unwrap();
        let p = h.proba(x.view()).unwrap();
        for row in p.rows() {
            assert!((row[0] - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_feature_is_dropped() {
        let (mut x, y) = toy();
        x.column_mut(1).fill(4.0);
        let h = RidgeHead::fit(x.view(), &y, 2, 1.0).unwrap();
        assert_eq!(h.inv_stds[1], 0.0);
        assert!(h.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn rejects_nonpositive_penalty() {
        let (x, y) = toy();
        assert!(matches!(RidgeHead::fit(x.view(), &y, 2, 0.0), Err(Error::Config(_))));
    }
}
