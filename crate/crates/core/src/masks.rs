//! Replacement distributions used to perturb time points.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::MtsDataset;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Zeros,
    StdNormal,
    LocalMean,
    LocalGaussian,
    GlobalMean,
    GlobalGaussian,
}

impl MaskKind {
    pub const ALL: [MaskKind; 6] = [
        MaskKind::Zeros,
        MaskKind::StdNormal,
        MaskKind::LocalMean,
        MaskKind::LocalGaussian,
        MaskKind::GlobalMean,
        MaskKind::GlobalGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Zeros => "zeros",
            MaskKind::StdNormal => "std_normal",
            MaskKind::LocalMean => "local_mean",
            MaskKind::LocalGaussian => "local_gaussian",
            MaskKind::GlobalMean => "global_mean",
            MaskKind::GlobalGaussian => "global_gaussian",
        }
    }

    /// Whether the replacement depends on fitted statistics.
    pub fn needs_stats(self) -> bool {
        !matches!(self, MaskKind::Zeros | MaskKind::StdNormal)
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MaskKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = MaskKind::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown mask {s:?}; valid masks: {}", names.join(", ")))
            })
    }
}

/// Per-(channel, time) and global moments of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskStats<T> {
    pub local_mean: Array2<T>,
    pub local_std: Array2<T>,
    pub global_mean: T,
    pub global_std: T,
    pub fitted_on: String,
}

/// Fit the replacement statistics.
///
/// Local moments are taken across instances at each `(c, t)`; the global
/// moments across all `N·d·L` values. Both standard deviations use the
/// unbiased `n − 1` denominator over the values they average. With a single
/// instance the local deviations are set to zero.
pub fn fit_stats<T: Scalar>(ds: &MtsDataset<T>) -> MaskStats<T> {
    let data = ds.data();
    let n = ds.n_instances();
    let nf = T::from_usize_lossy(n);
    let local_mean = data.sum_axis(Axis(0)).mapv(|s| s / nf);
    let local_std = if n < 2 {
        log::warn!("fit_stats: a single instance has no spread; local stds set to 0");
        Array2::zeros(local_mean.dim())
    } else {
        let mut ss = Array2::<T>::zeros(local_mean.dim());
        for inst in data.axis_iter(Axis(0)) {
            ndarray::Zip::from(&mut ss)
                .and(&inst)
                .and(&local_mean)
                .for_each(|s, &x, &m| *s = *s + (x - m) * (x - m));
        }
        let denom = T::from_usize_lossy(n - 1);
        ss.mapv(|s| (s / denom).sqrt())
    };

    let total = data.len();
    let global_mean = data.iter().copied().sum::<T>() / T::from_usize_lossy(total);
    let global_std = if total < 2 {
        T::zero()
    } else {
        let ss: T = data.iter().map(|&x| (x - global_mean) * (x - global_mean)).sum();
        (ss / T::from_usize_lossy(total - 1)).sqrt()
    };
    MaskStats {
        local_mean,
        local_std,
        global_mean,
        global_std,
        fitted_on: format!("{}/{}", ds.name(), ds.split()),
    }
}

fn gaussian<T: Scalar>(mean: T, std: T, rng: &mut Rng) -> T {
    let z: f64 = rng.sample(StandardNormal);
    mean + std * T::from_f64_lossy(z)
}

fn require_stats<T>(kind: MaskKind, stats: Option<&MaskStats<T>>) -> Result<&MaskStats<T>> {
    stats.ok_or_else(|| Error::Config(format!("mask {kind} needs fitted statistics")))
}

/// Replacement value for coordinate `(c, t)`.
///
/// The deterministic kinds never touch `rng`; the Gaussian kinds draw one
/// standard normal each.
pub fn replacement_value<T: Scalar>(
    kind: MaskKind,
    stats: Option<&MaskStats<T>>,
    c: usize,
    t: usize,
    rng: &mut Rng,
) -> Result<T> {
    Ok(match kind {
        MaskKind::Zeros => T::zero(),
        MaskKind::StdNormal => gaussian(T::zero(), T::one(), rng),
        MaskKind::LocalMean => require_stats(kind, stats)?.local_mean[[c, t]],
        MaskKind::LocalGaussian => {
            let s = require_stats(kind, stats)?;
            gaussian(s.local_mean[[c, t]], s.local_std[[c, t]], rng)
        }
        MaskKind::GlobalMean => require_stats(kind, stats)?.global_mean,
        MaskKind::GlobalGaussian => {
            let s = require_stats(kind, stats)?;
            gaussian(s.global_mean, s.global_std, rng)
        }
    })
}

/// A full `d × L` replacement matrix, drawn coordinate by coordinate in
/// row-major order.
pub fn replacement_matrix<T: Scalar>(
    kind: MaskKind,
    stats: Option<&MaskStats<T>>,
    d: usize,
    l: usize,
    rng: &mut Rng,
) -> Result<Array2<T>> {
    if kind.needs_stats() {
        let s = require_stats(kind, stats)?;
        if s.local_mean.dim() != (d, l) {
            return Err(Error::Dimension(format!(
                "mask statistics are {:?}, data is ({d}, {l})",
                s.local_mean.dim()
            )));
        }
    }
    let mut out = Array2::zeros((d, l));
    for c in 0..d {
        for t in 0..l {
            out[[c, t]] = replacement_value(kind, stats, c, t, rng)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::rng::substream;
    use ndarray::Array3;
    use rand::RngCore;

    fn ds(values: Array3<f64>) -> MtsDataset<f64> {
        let n = values.dim().0;
        MtsDataset::new(values, vec![0; n], 1, "m", Split::Test).unwrap()
    }

    #[test]
    fn local_mean_and_unbiased_std() {
        let mut v = Array3::zeros((2, 1, 2));
        v[[0, 0, 0]] = 1.0;
        v[[1, 0, 0]] = 3.0;
        v[[0, 0, 1]] = 0.0;
        v[[1, 0, 1]] = 2.0;
        let s = fit_stats(&ds(v));
        assert_eq!(s.local_mean[[0, 0]], 2.0);
        // ((0-1)^2 + (2-1)^2) / (2-1) = 2
        assert!((s.local_std[[0, 1]] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_data_has_zero_spread() {
        let s = fit_stats(&ds(Array3::from_elem((4, 2, 3), 1.0)));
        assert_eq!(s.global_mean, 1.0);
        assert_eq!(s.global_std, 0.0);
        let mut r = substream(0, 0, &[]);
        assert_eq!(replacement_value(MaskKind::GlobalMean, Some(&s), 0, 0, &mut r).unwrap(), 1.0);
    }

    #[test]
    fn single_instance_stds_are_zero() {
        let s = fit_stats(&ds(Array3::from_shape_fn((1, 2, 2), |(_, c, t)| (c + t) as f64)));
        assert!(s.local_std.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_local_gaussian_returns_mean() {
        let s = fit_stats(&ds(Array3::from_elem((3, 1, 1), 2.5)));
        let mut r = substream(1, 0, &[]);
        assert_eq!(replacement_value(MaskKind::LocalGaussian, Some(&s), 0, 0, &mut r).unwrap(), 2.5);
    }

    #[test]
    fn zeros_and_means_leave_stream_untouched() {
        let s = fit_stats(&ds(Array3::from_shape_fn((3, 1, 2), |(i, _, t)| (i * t) as f64)));
        for kind in [MaskKind::Zeros, MaskKind::LocalMean, MaskKind::GlobalMean] {
            let mut used = substream(5, 0, &[]);
            let mut fresh = substream(5, 0, &[]);
            replacement_value(kind, Some(&s), 0, 1, &mut used).unwrap();
            assert_eq!(used.next_u64(), fresh.next_u64());
        }
        let mut r = substream(5, 0, &[]);
        assert_eq!(replacement_value::<f64>(MaskKind::Zeros, None, 3, 3, &mut r).unwrap(), 0.0);
    }

    #[test]
    fn missing_stats_is_a_config_error() {
        let mut r = substream(0, 0, &[]);
        assert!(matches!(
            replacement_value::<f64>(MaskKind::LocalMean, None, 0, 0, &mut r),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn local_gaussian_mean_converges() {
        let v = Array3::from_shape_fn((5, 1, 1), |(i, _, _)| i as f64 * 0.7 - 1.0);
        let s = fit_stats(&ds(v));
        let mut r = substream(9, 0, &[]);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| replacement_value(MaskKind::LocalGaussian, Some(&s), 0, 0, &mut r).unwrap())
            .sum::<f64>()
            / n as f64;
        let sigma = s.local_std[[0, 0]];
        assert!((mean - s.local_mean[[0, 0]]).abs() <= 4.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn names_round_trip() {
        for m in MaskKind::ALL {
            assert_eq!(m.name().parse::<MaskKind>().unwrap(), m);
        }
        assert!("gaussian".parse::<MaskKind>().is_err());
    }
}
