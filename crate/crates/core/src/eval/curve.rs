//! Perturbation curves: relative score drop versus fraction of replaced
//! points, and the areas under them.

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::perturb::{perturb_with, positive_order, Side};
use crate::data::{MtsDataset, Saliency};
use crate::error::{Error, Result};
use crate::masks::{replacement_matrix, MaskKind, MaskStats};
use crate::models::{argmax_rows, predict_proba_chunked, Classifier};
use crate::rng::{self, domain};
use crate::scalar::Scalar;

/// Clean scores at or below this are excluded from the `S̄` averages.
pub const SCORE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSchedule {
    ks: Vec<f64>,
}

impl Default for QuantileSchedule {
    fn default() -> Self {
        Self {
            ks: vec![0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95, 1.0],
        }
    }
}

impl QuantileSchedule {
    pub fn new(ks: Vec<f64>) -> Result<Self> {
        if ks.is_empty() {
            return Err(Error::Config("quantile schedule is empty".into()));
        }
        if ks.iter().any(|&k| !(k > 0.0 && k <= 1.0)) {
            return Err(Error::Config(format!("quantiles must lie in (0, 1]: {ks:?}")));
        }
        if ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("quantiles must be strictly increasing: {ks:?}")));
        }
        Ok(Self { ks })
    }

    pub fn ks(&self) -> &[f64] {
        &self.ks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub k: f64,
    /// Mean fraction of points replaced by the top perturbation.
    pub n_tilde: f64,
    /// Mean fraction replaced by the bottom perturbation.
    pub n_tilde_bottom: f64,
    pub s_top: f64,
    pub s_bottom: f64,
    /// Accuracy on the top-perturbed batch.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub method: String,
    pub mask: MaskKind,
    pub clean_accuracy: f64,
    pub samples: Vec<CurveSample>,
    pub n_instances: usize,
    /// Instances left out of the `S̄` averages for a near-zero clean score.
    pub n_skipped: usize,
}

/// Per-instance outcome at every quantile.
struct InstanceCurve<T> {
    s_top: Vec<T>,
    s_bottom: Vec<T>,
    pred_top: Vec<usize>,
    n_top: Vec<f64>,
    n_bottom: Vec<f64>,
}

fn mask_index(mask: MaskKind) -> u64 {
    MaskKind::ALL.iter().position(|&m| m == mask).expect("known mask") as u64
}

/// The replacement matrix instance `i` sees under `mask`. It is shared by
/// every quantile, both sides and every method, so methods are compared on
/// identical noise.
pub fn eval_replacement<T: Scalar>(
    mask: MaskKind,
    stats: Option<&MaskStats<T>>,
    d: usize,
    l: usize,
    seed: u64,
    index: usize,
) -> Result<Array2<T>> {
    let mut r = rng::substream(seed, domain::EVAL_MASK, &[index as u64, mask_index(mask)]);
    replacement_matrix(mask, stats, d, l, &mut r)
}

/// Average `S̄_top`, `S̄_bottom`, `ñ` and accuracy over the dataset at every
/// quantile of `schedule`. `saliency` must be normalized; `targets[i]` is the
/// class whose probability is `S` for instance `i`.
#[allow(clippy::too_many_arguments)]
pub fn build_curve<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    ds: &MtsDataset<T>,
    saliency: &Saliency<T>,
    targets: &[usize],
    mask: MaskKind,
    stats: Option<&MaskStats<T>>,
    schedule: &QuantileSchedule,
    seed: u64,
) -> Result<PerturbationCurve> {
    saliency.check_shape(ds)?;
    let (n, d, l) = ds.data().dim();
    if targets.len() != n {
        return Err(Error::Dimension(format!("{} targets for {n} instances", targets.len())));
    }
    let clean = predict_proba_chunked(model, ds.data(), 256)?;
    let clean_pred = argmax_rows(clean.view());
    let labels = ds.labels();
    let clean_accuracy = clean_pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / n as f64;
    let ks = schedule.ks();
    let nk = ks.len();

    let per_instance: Vec<InstanceCurve<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = ds.instance(i);
            let r = eval_replacement(mask, stats, d, l, seed, i)?;
            let order = positive_order(saliency.instance(i));
            let mut batch = Array3::zeros((2 * nk, d, l));
            let mut n_top = Vec::with_capacity(nk);
            let mut n_bottom = Vec::with_capacity(nk);
            for (j, &k) in ks.iter().enumerate() {
                let (top, nt) = perturb_with(x, &order, k, Side::Top, r.view());
                let (bottom, nb) = perturb_with(x, &order, k, Side::Bottom, r.view());
                batch.index_axis_mut(Axis(0), 2 * j).assign(&top);
                batch.index_axis_mut(Axis(0), 2 * j + 1).assign(&bottom);
                n_top.push(nt);
                n_bottom.push(nb);
            }
            let p = model.predict_proba(batch.view())?;
            let pred = argmax_rows(p.view());
            Ok(InstanceCurve {
                s_top: (0..nk).map(|j| p[[2 * j, targets[i]]]).collect(),
                s_bottom: (0..nk).map(|j| p[[2 * j + 1, targets[i]]]).collect(),
                pred_top: (0..nk).map(|j| pred[2 * j]).collect(),
                n_top,
                n_bottom,
            })
        })
        .collect::<Result<_>>()?;

    let used: Vec<usize> = (0..n)
        .filter(|&i| clean[[i, targets[i]]].to_f64_lossy() > SCORE_EPS)
        .collect();
    if used.is_empty() {
        return Err(Error::DegenerateScores(n));
    }
    let nu = used.len() as f64;
    let samples = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let mut sample = CurveSample {
                k,
                n_tilde: 0.0,
                n_tilde_bottom: 0.0,
                s_top: 0.0,
                s_bottom: 0.0,
                accuracy: 0.0,
            };
            for &i in &used {
                let s = clean[[i, targets[i]]].to_f64_lossy();
                let c = &per_instance[i];
                sample.s_top += (s - c.s_top[j].to_f64_lossy()) / s;
                sample.s_bottom += (s - c.s_bottom[j].to_f64_lossy()) / s;
                sample.n_tilde += c.n_top[j];
                sample.n_tilde_bottom += c.n_bottom[j];
            }
            sample.s_top /= nu;
            sample.s_bottom /= nu;
            sample.n_tilde /= nu;
            sample.n_tilde_bottom /= nu;
            let hits = (0..n).filter(|&i| per_instance[i].pred_top[j] == labels[i]).count();
            sample.accuracy = hits as f64 / n as f64;
            sample
        })
        .collect();
    if used.len() < n {
        log::info!("{}/{mask}: skipped {} instance(s) with clean score <= {SCORE_EPS}", saliency.method, n - used.len());
    }
    Ok(PerturbationCurve {
        method: saliency.method.clone(),
        mask,
        clean_accuracy,
        samples,
        n_instances: n,
        n_skipped: n - used.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AucOptions {
    /// Integrate up to the largest `ñ` reached and divide by it, instead of
    /// extending the last value flat to `ñ = 1`.
    pub normalize_by_max: bool,
    /// Clip `S̄` at zero before integrating.
    pub clip_sbar: bool,
}

/// Trapezoidal area under `(ñ, s)` points with the origin prepended.
pub fn area_under(points: &[(f64, f64)], opts: AucOptions) -> f64 {
    let mut pts = Vec::with_capacity(points.len() + 2);
    pts.push((0.0, 0.0));
    pts.extend(
        points
            .iter()
            .map(|&(x, y)| (x, if opts.clip_sbar { y.max(0.0) } else { y })),
    );
    let max_x = pts.iter().fold(0.0f64, |m, p| m.max(p.0));
    if !opts.normalize_by_max && max_x < 1.0 {
        let last = pts.last().expect("origin present").1;
        pts.push((1.0, last));
    }
    let area: f64 = pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum();
    if opts.normalize_by_max {
        if max_x > 0.0 {
            area / max_x
        } else {
            0.0
        }
    } else {
        area
    }
}

/// `AUC S̄_top` over `ñ`.
pub fn auc_top(curve: &PerturbationCurve, opts: AucOptions) -> f64 {
    let pts: Vec<_> = curve.samples.iter().map(|s| (s.n_tilde, s.s_top)).collect();
    area_under(&pts, opts)
}

/// `AUC S̄_bottom`, integrated over the same `ñ` grid as the top curve.
pub fn auc_bottom(curve: &PerturbationCurve, opts: AucOptions) -> f64 {
    let pts: Vec<_> = curve.samples.iter().map(|s| (s.n_tilde, s.s_bottom)).collect();
    area_under(&pts, opts)
}

/// Harmonic mean of `auc_top` and `1 − auc_bottom`, both clipped to `[0, 1]`.
pub fn f1s(auc_top: f64, auc_bottom: f64) -> f64 {
    let a = auc_top.clamp(0.0, 1.0);
    let b = 1.0 - auc_bottom.clamp(0.0, 1.0);
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attrib::random_attribution;
    use crate::data::{normalize_saliency, Split};
    use crate::models::stub::{Logistic, Uniform};

    #[test]
    fn flat_unit_curve_from_first_sample() {
        assert!((area_under(&[(0.05, 1.0), (0.5, 1.0)], AucOptions::default()) - 0.975).abs() < 1e-15);
    }

    #[test]
    fn triangle_and_zero() {
        let o = AucOptions::default();
        assert!((area_under(&[(0.5, 0.5), (1.0, 1.0)], o) - 0.5).abs() < 1e-15);
        assert_eq!(area_under(&[(0.3, 0.0), (0.7, 0.0)], o), 0.0);
    }

    #[test]
    fn normalizing_by_max_rescales_the_domain() {
        let o = AucOptions {
            normalize_by_max: true,
            clip_sbar: false,
        };
        // Triangle over [0, 0.5] with height 1 → area 0.25, divided by 0.5.
        assert!((area_under(&[(0.5, 1.0)], o) - 0.5).abs() < 1e-15);
        assert_eq!(area_under(&[(0.0, 0.4)], o), 0.0);
    }

    #[test]
    fn clipping_removes_negative_drops() {
        let clip = AucOptions {
            normalize_by_max: false,
            clip_sbar: true,
        };
        assert_eq!(area_under(&[(0.5, -1.0), (1.0, -1.0)], clip), 0.0);
        assert!(area_under(&[(0.5, -1.0), (1.0, -1.0)], AucOptions::default()) < 0.0);
    }

    #[test]
    fn f1s_examples() {
        assert_eq!(f1s(1.0, 0.0), 1.0);
        assert!((f1s(0.6, 0.2) - 2.0 * 0.6 * 0.8 / 1.4).abs() < 1e-15);
        assert_eq!(f1s(0.0, 0.3), 0.0);
        assert_eq!(f1s(0.0, 1.0), 0.0);
    }

    #[test]
    fn schedule_validation() {
        assert_eq!(QuantileSchedule::default().ks().len(), 11);
        assert!(QuantileSchedule::new(vec![0.5, 0.5]).is_err());
        assert!(QuantileSchedule::new(vec![0.0, 0.5]).is_err());
        assert!(QuantileSchedule::new(vec![]).is_err());
    }

    fn dataset() -> MtsDataset<f64> {
        let x = Array3::from_shape_fn((12, 2, 10), |(i, c, t)| ((i * 7 + c * 3 + t) % 11) as f64 / 5.0 - 1.0);
        MtsDataset::new(x, (0..12).map(|i| i % 2).collect(), 2, "c", Split::Test).unwrap()
    }

    #[test]
    fn insensitive_model_has_flat_zero_curve() {
        let ds = dataset();
        let s = normalize_saliency(&random_attribution(ds.data().dim(), 1)).unwrap();
        let curve = build_curve(&Uniform { classes: 2 }, &ds, &s, &[0; 12], MaskKind::Zeros, None, &QuantileSchedule::default(), 3)
            .unwrap();
        assert!(curve.samples.iter().all(|p| p.s_top == 0.0 && p.s_bottom == 0.0));
        assert!(curve.samples.windows(2).all(|w| w[0].n_tilde <= w[1].n_tilde));
        assert!((curve.samples.last().unwrap().n_tilde - 1.0).abs() < 1e-12);
    }

    #[test]
    fn curve_is_reproducible_and_counts_skips() {
        let ds = dataset();
        let w = Array2::from_shape_fn((2, 10), |(c, t)| if c == 0 { 3.0 } else { 0.1 * t as f64 });
        let m = Logistic { weights: w, bias: 0.0 };
        let s = normalize_saliency(&random_attribution(ds.data().dim(), 2)).unwrap();
        let stats = crate::masks::fit_stats(&ds);
        let run = || {
            build_curve(&m, &ds, &s, &[1; 12], MaskKind::GlobalGaussian, Some(&stats), &QuantileSchedule::default(), 5).unwrap()
        };
        assert_eq!(run(), run());

        struct Zero;
        impl Classifier<f64> for Zero {
            fn n_classes(&self) -> usize {
                2
            }
            fn input_shape(&self) -> Option<(usize, usize)> {
                None
            }
            fn predict_proba(&self, b: ndarray::ArrayView3<'_, f64>) -> Result<Array2<f64>> {
                let mut p = Array2::zeros((b.dim().0, 2));
                p.column_mut(0).fill(1.0);
                Ok(p)
            }
        }
        let err = build_curve(&Zero, &ds, &s, &[1; 12], MaskKind::Zeros, None, &QuantileSchedule::default(), 5);
        assert!(matches!(err, Err(Error::DegenerateScores(12))));
    }
}
