//! Synthetic benchmark with explanation ground truth.
//!
//! Every channel carries a background sine. Two channels drawn from the
//! discriminative pool have a `window_len` stretch replaced by faster sines
//! with frequencies `f1` and `f2`; the label is `f1 + f2 > threshold`. The
//! remaining channels may carry a square wave that carries no class signal.
//! The last `extra_nondisc_channels` channels are never discriminative.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, Axis};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GroundTruthMask, MtsDataset, Split};
use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_channels: usize,
    pub length: usize,
    pub window_len: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Background sine frequency range, in cycles over the whole series.
    pub base_freq_range: (f64, f64),
    /// Range of `f1` and `f2`, in cycles over the whole series.
    pub disc_freq_range: (f64, f64),
    pub label_threshold: f64,
    pub square_wave_prob: f64,
    pub extra_nondisc_channels: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_channels: 8,
            length: 500,
            window_len: 100,
            n_train: 7500,
            n_test: 1000,
            base_freq_range: (1.0, 3.0),
            disc_freq_range: (4.0, 8.0),
            label_threshold: 12.0,
            square_wave_prob: 0.5,
            extra_nondisc_channels: 2,
            seed: 0,
        }
    }
}

/// Cycles of the square wave over the whole series.
const SQUARE_WAVE_CYCLES: f64 = 2.0;

impl SynthConfig {
    /// Number of leading channels the discriminative pair is drawn from.
    pub fn n_discriminative_pool(&self) -> usize {
        self.n_channels.saturating_sub(self.extra_nondisc_channels)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.length == 0 || self.window_len == 0 {
            return bad("length and window_len must be positive".into());
        }
        if self.window_len > self.length {
            return bad(format!(
                "window_len {} is longer than the series length {}",
                self.window_len, self.length
            ));
        }
        if self.n_channels < 3 {
            return bad(format!("n_channels must be at least 3, got {}", self.n_channels));
        }
        if self.n_discriminative_pool() < 2 {
            return bad(format!(
                "{} extra non-discriminative channels leave fewer than 2 of {} channels for the discriminative pair",
                self.extra_nondisc_channels, self.n_channels
            ));
        }
        let (blo, bhi) = self.base_freq_range;
        let (dlo, dhi) = self.disc_freq_range;
        if !(blo <= bhi && dlo <= dhi && blo >= 0.0) {
            return bad("frequency ranges must be ordered and nonnegative".into());
        }
        if dlo <= bhi {
            return bad(format!(
                "disc_freq_range {:?} must lie strictly above base_freq_range {:?}",
                self.disc_freq_range, self.base_freq_range
            ));
        }
        if !(0.0..=1.0).contains(&self.square_wave_prob) {
            return bad(format!("square_wave_prob {} outside [0, 1]", self.square_wave_prob));
        }
        if self.n_train == 0 {
            return bad("n_train must be positive".into());
        }
        if self.n_test > 0 && !(2.0 * dlo < self.label_threshold && self.label_threshold < 2.0 * dhi) {
            return bad(format!(
                "threshold {} leaves one class empty for f1 + f2 in [{}, {}]",
                self.label_threshold,
                2.0 * dlo,
                2.0 * dhi
            ));
        }
        Ok(())
    }
}

/// Generation metadata for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSample {
    pub channels: (usize, usize),
    pub window_start: usize,
    pub f1: f64,
    pub f2: f64,
    pub label: usize,
}

impl SynthSample {
    pub fn label_for(f1: f64, f2: f64, threshold: f64) -> usize {
        usize::from(f1 + f2 > threshold)
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput<T> {
    pub train: MtsDataset<T>,
    pub test: MtsDataset<T>,
    pub gt_train: GroundTruthMask,
    pub gt_test: GroundTruthMask,
    pub meta_train: Vec<SynthSample>,
    pub meta_test: Vec<SynthSample>,
}

/// Draw the metadata (label-determining part first) from an attempt stream.
fn draw_meta(cfg: &SynthConfig, r: &mut rng::Rng) -> SynthSample {
    let (dlo, dhi) = cfg.disc_freq_range;
    let f1 = r.random_range(dlo..=dhi);
    let f2 = r.random_range(dlo..=dhi);
    let pool = cfg.n_discriminative_pool();
    let c1 = r.random_range(0..pool);
    let mut c2 = r.random_range(0..pool - 1);
    if c2 >= c1 {
        c2 += 1;
    }
    let window_start = r.random_range(0..=cfg.length - cfg.window_len);
    SynthSample {
        channels: (c1.min(c2), c1.max(c2)),
        window_start,
        f1,
        f2,
        label: SynthSample::label_for(f1, f2, cfg.label_threshold),
    }
}

fn render(cfg: &SynthConfig, meta: &SynthSample, r: &mut rng::Rng) -> (Array2<f64>, Array2<u8>) {
    let (d, l, w) = (cfg.n_channels, cfg.length, cfg.window_len);
    let (blo, bhi) = cfg.base_freq_range;
    let mut x = Array2::zeros((d, l));
    let mut g = Array2::zeros((d, l));
    let lf = l as f64;
    for c in 0..d {
        let freq = r.random_range(blo..=bhi);
        let phase = r.random_range(0.0..2.0 * PI);
        let square = r.random_bool(cfg.square_wave_prob);
        let disc = if c == meta.channels.0 {
            Some(meta.f1)
        } else if c == meta.channels.1 {
            Some(meta.f2)
        } else {
            None
        };
        for t in 0..l {
            let tf = t as f64;
            x[[c, t]] = (2.0 * PI * freq * tf / lf + phase).sin();
        }
        match disc {
            Some(f) => {
                for t in meta.window_start..meta.window_start + w {
                    let local = (t - meta.window_start) as f64;
                    x[[c, t]] = (2.0 * PI * f * local / lf).sin();
                    g[[c, t]] = 1;
                }
            }
            None if square => {
                for t in 0..l {
                    let s = (2.0 * PI * SQUARE_WAVE_CYCLES * t as f64 / lf).sin();
                    x[[c, t]] += if s >= 0.0 { 1.0 } else { -1.0 };
                }
            }
            None => {}
        }
    }
    (x, g)
}

fn assemble<T: Scalar>(
    cfg: &SynthConfig,
    split: Split,
    parts: Vec<(SynthSample, Array2<f64>, Array2<u8>)>,
) -> Result<(MtsDataset<T>, GroundTruthMask, Vec<SynthSample>)> {
    let n = parts.len();
    let mut data = Array3::zeros((n, cfg.n_channels, cfg.length));
    let mut gt = Array3::zeros((n, cfg.n_channels, cfg.length));
    let mut meta = Vec::with_capacity(n);
    for (i, (m, x, g)) in parts.into_iter().enumerate() {
        data.index_axis_mut(Axis(0), i).assign(&x.mapv(T::from_f64_lossy));
        gt.index_axis_mut(Axis(0), i).assign(&g);
        meta.push(m);
    }
    let labels = meta.iter().map(|m| m.label).collect();
    let ds = MtsDataset::new(data, labels, 2, "synthetic", split)?;
    Ok((ds, GroundTruthMask::new(gt)?, meta))
}

/// Generate the train and test splits together with their ground truth.
///
/// Train instances are i.i.d.; the test split is exactly balanced by
/// rejection sampling (`n_test / 2` positives). Each attempt draws from its
/// own stream keyed by `(seed, split, attempt)`.
pub fn generate<T: Scalar>(cfg: &SynthConfig) -> Result<SynthOutput<T>> {
    cfg.validate()?;

    let train_parts: Vec<_> = (0..cfg.n_train as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(cfg.seed, domain::SYNTH_TRAIN, &[i]);
            let meta = draw_meta(cfg, &mut r);
            let (x, g) = render(cfg, &meta, &mut r);
            (meta, x, g)
        })
        .collect();

    let quota = [cfg.n_test - cfg.n_test / 2, cfg.n_test / 2];
    let mut filled = [0usize; 2];
    let mut accepted = Vec::with_capacity(cfg.n_test);
    let max_attempts = 1000 * (cfg.n_test as u64 + 1);
    let mut attempt = 0u64;
    while accepted.len() < cfg.n_test {
        if attempt >= max_attempts {
            return Err(Error::Config(format!(
                "could not balance the test split after {max_attempts} attempts"
            )));
        }
        let mut r = rng::substream(cfg.seed, domain::SYNTH_TEST, &[attempt]);
        attempt += 1;
        let meta = draw_meta(cfg, &mut r);
        if filled[meta.label] < quota[meta.label] {
            filled[meta.label] += 1;
            accepted.push((meta, r));
        }
    }
    let test_parts: Vec<_> = accepted
        .into_par_iter()
        .map(|(meta, mut r)| {
            let (x, g) = render(cfg, &meta, &mut r);
            (meta, x, g)
        })
        .collect();

    let (train, gt_train, meta_train) = assemble(cfg, Split::Train, train_parts)?;
    let (test, gt_test, meta_test) = if cfg.n_test > 0 {
        assemble(cfg, Split::Test, test_parts)?
    } else {
        return Err(Error::Config("n_test must be positive".into()));
    };
    Ok(SynthOutput {
        train,
        test,
        gt_train,
        gt_test,
        meta_train,
        meta_test,
    })
}

/// Per-class instance counts.
pub fn class_balance<T: Scalar>(ds: &MtsDataset<T>) -> Vec<usize> {
    ds.class_counts()
}
