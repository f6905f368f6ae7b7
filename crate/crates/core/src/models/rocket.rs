//! Random convolutional kernel classifier.
//!
//! Each kernel is a dilated multichannel convolution with random weights,
//! bias, dilation and padding over a random subset of channels. An input is
//! summarized per kernel by two pooled statistics of the convolution output:
//! the proportion of positive values and the maximum. A ridge head classifies
//! the resulting `2K` features.

use ndarray::{Array2, ArrayView3, Axis};
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{check_batch_shape, Classifier, RidgeHead};
use crate::data::MtsDataset;
use crate::error::{Error, Result};
use crate::rng::{self, domain};
use crate::scalar::Scalar;

pub const KERNEL_LENGTHS: [usize; 3] = [7, 9, 11];

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    pub length: usize,
    pub dilation: usize,
    pub padding: usize,
    pub bias: T,
    pub channels: Vec<usize>,
    /// `channels.len() × length`, row-major.
    pub weights: Vec<T>,
}

impl<T: Scalar> Kernel<T> {
    /// Draw kernel `index` for a `d × l` input from its own stream.
    pub fn random(seed: u64, index: u64, d: usize, l: usize) -> Self {
        let mut r = rng::substream(seed, domain::KERNELS, &[index]);
        let length = KERNEL_LENGTHS[r.random_range(0..KERNEL_LENGTHS.len())];

        let max_channels = d.min(length) as f64;
        let n_channels = (2f64.powf(r.random_range(0.0..(max_channels + 1.0).log2())) as usize).clamp(1, d);
        let mut channels = sample(&mut r, d, n_channels).into_vec();
        channels.sort_unstable();

        let mut weights = Vec::with_capacity(n_channels * length);
        for _ in 0..n_channels {
            let row: Vec<f64> = (0..length).map(|_| r.sample(StandardNormal)).collect();
            let mean = row.iter().sum::<f64>() / length as f64;
            weights.extend(row.iter().map(|w| T::from_f64_lossy(w - mean)));
        }
        let bias = T::from_f64_lossy(r.random_range(-1.0..1.0));

        let max_exponent = ((l - 1) as f64 / (length - 1) as f64).log2().max(0.0);
        let dilation = (2f64.powf(r.random_range(0.0..=max_exponent)) as usize).max(1);
        let padding = if r.random_bool(0.5) {
            (length - 1) * dilation / 2
        } else {
            0
        };
        Self {
            length,
            dilation,
            padding,
            bias,
            channels,
            weights,
        }
    }

    fn extent(&self) -> usize {
        (self.length - 1) * self.dilation + 1
    }

    /// Pooled `(ppv, max)` of the convolution over one `d × l` instance.
    fn apply(&self, x: &[T], l: usize, acc: &mut Vec<T>) -> (T, T) {
        let out_len = l + 2 * self.padding - self.extent() + 1;
        acc.clear();
        acc.resize(out_len, self.bias);
        for (ci, &ch) in self.channels.iter().enumerate() {
            let row = &x[ch * l..(ch + 1) * l];
            for j in 0..self.length {
                let w = self.weights[ci * self.length + j];
                let offset = (j * self.dilation) as isize - self.padding as isize;
                let lo = (-offset).max(0) as usize;
                let hi = ((l as isize - offset).max(0) as usize).min(out_len);
                if lo >= hi {
                    continue;
                }
                let src = &row[(lo as isize + offset) as usize..(hi as isize + offset) as usize];
                for (a, &v) in acc[lo..hi].iter_mut().zip(src) {
                    *a = *a + w * v;
                }
            }
        }
        let mut positive = 0usize;
        let mut max = T::neg_infinity();
        for &a in acc.iter() {
            if a > T::zero() {
                positive += 1;
            }
            max = max.max(a);
        }
        (T::from_usize_lossy(positive) / T::from_usize_lossy(out_len), max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomKernelModel<T> {
    pub(crate) d: usize,
    pub(crate) l: usize,
    pub(crate) seed: u64,
    pub(crate) kernels: Vec<Kernel<T>>,
    pub(crate) head: RidgeHead<T>,
}

impl<T: Scalar> RandomKernelModel<T> {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kernels(&self) -> &[Kernel<T>] {
        &self.kernels
    }

    pub fn head(&self) -> &RidgeHead<T> {
        &self.head
    }

    /// Feature matrix `N × 2K`; columns alternate `(ppv, max)` per kernel.
    pub fn transform(&self, batch: ArrayView3<'_, T>) -> Result<Array2<T>> {
        check_batch_shape(Some((self.d, self.l)), batch.dim())?;
        Ok(transform(&self.kernels, batch))
    }
}

fn transform<T: Scalar>(kernels: &[Kernel<T>], batch: ArrayView3<'_, T>) -> Array2<T> {
    let (n, _, l) = batch.dim();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let inst = batch.index_axis(Axis(0), i);
            let owned;
            let x = match inst.as_slice() {
                Some(s) => s,
                None => {
                    owned = inst.as_standard_layout().into_owned();
                    owned.as_slice().expect("standard layout")
                }
            };
            let mut acc = Vec::with_capacity(2 * l);
            let mut row = Vec::with_capacity(2 * kernels.len());
            for k in kernels {
                let (ppv, max) = k.apply(x, l, &mut acc);
                row.push(ppv);
                row.push(max);
            }
            row
        })
        .collect();
    let mut out = Array2::zeros((n, 2 * kernels.len()));
    for (i, row) in rows.into_iter().enumerate() {
        for (dst, v) in out.row_mut(i).iter_mut().zip(row) {
            *dst = v;
        }
    }
    out
}

/// Train with `k` random kernels drawn from `seed` and a ridge head with
/// penalty `lambda` over the standardized kernel features.
pub fn train_random_kernel<T: Scalar>(
    ds: &MtsDataset<T>,
    k: usize,
    seed: u64,
    lambda: f64,
) -> Result<RandomKernelModel<T>> {
    if k == 0 {
        return Err(Error::Config("kernel count must be at least 1".into()));
    }
    let (d, l) = (ds.n_channels(), ds.length());
    let longest = *KERNEL_LENGTHS.iter().max().expect("nonempty");
    if l < longest {
        return Err(Error::Config(format!(
            "series length {l} is shorter than the longest kernel ({longest})"
        )));
    }
    let kernels: Vec<Kernel<T>> = (0..k as u64).map(|j| Kernel::random(seed, j, d, l)).collect();
    let features = transform(&kernels, ds.data());
    let head = RidgeHead::fit(features.view(), ds.labels(), ds.n_classes(), lambda)?;
    Ok(RandomKernelModel {
        d,
        l,
        seed,
        kernels,
        head,
    })
}

impl<T: Scalar> Classifier<T> for RandomKernelModel<T> {
    fn n_classes(&self) -> usize {
        self.head.n_classes()
    }

    fn input_shape(&self) -> Option<(usize, usize)> {
        Some((self.d, self.l))
    }

    fn predict_proba(&self, batch: ArrayView3<'_, T>) -> Result<Array2<T>> {
        let f = self.transform(batch)?;
        self.head.proba(f.view())
    }
}

/// Direct convolution used to cross-check the sliding implementation.
#[cfg(test)]
fn naive_apply<T: Scalar>(k: &Kernel<T>, x: ndarray::ArrayView2<'_, T>) -> (T, T) {
    let l = x.ncols();
    let out_len = l + 2 * k.padding - k.extent() + 1;
    let mut positive = 0;
    let mut max = T::neg_infinity();
    for i in 0..out_len {
        let mut s = k.bias;
        for (ci, &ch) in k.channels.iter().enumerate() {
            for j in 0..k.length {
                let t = i as isize + (j * k.dilation) as isize - k.padding as isize;
                if t >= 0 && (t as usize) < l {
                    s = s + k.weights[ci * k.length + j] * x[[ch, t as usize]];
                }
            }
        }
        if s > T::zero() {
            positive += 1;
        }
        max = max.max(s);
    }
    (T::from_usize_lossy(positive) / T::from_usize_lossy(out_len), max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::models::accuracy;
    use ndarray::Array3;

    fn wave_data(n: usize) -> MtsDataset<f64> {
        let data = Array3::from_shape_fn((n, 3, 40), |(i, c, t)| {
            let f = if i % 2 == 0 { 1.0 } else { 4.0 };
            (t as f64 * f * 0.15 + c as f64).sin() + 0.01 * ((i * 31 + t * 7) % 13) as f64
        });
        let labels = (0..n).map(|i| i % 2).collect();
        MtsDataset::new(data, labels, 2, "waves", Split::Train).unwrap()
    }

    #[test]
    fn sliding_convolution_matches_direct_sum() {
        let ds = wave_data(3);
        for j in 0..50 {
            let k = Kernel::<f64>::random(5, j, 3, 40);
            let x = ds.instance(1);
            let mut acc = Vec::new();
            let (p1, m1) = k.apply(x.as_slice().unwrap(), 40, &mut acc);
            let (p2, m2) = naive_apply(&k, x);
            assert_eq!(p1, p2);
            assert!((m1 - m2).abs() < 1e-12);
        }
    }

    #[test]
    fn kernels_respect_structure() {
        for j in 0..200 {
            let k = Kernel::<f64>::random(1, j, 8, 500);
            assert!(KERNEL_LENGTHS.contains(&k.length));
            assert!(k.extent() <= 500);
            assert!(!k.channels.is_empty() && k.channels.len() <= 8);
            assert!(k.channels.windows(2).all(|w| w[0] < w[1]));
            for row in k.weights.chunks(k.length) {
                assert!(row.iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn learns_frequency_and_is_deterministic() {
        let ds = wave_data(40);
        let a = train_random_kernel(&ds, 64, 3, 1.0).unwrap();
        let b = train_random_kernel(&ds, 64, 3, 1.0).unwrap();
        assert_eq!(a.transform(ds.data()).unwrap().ncols(), 128);
        assert!(accuracy(&a, &ds).unwrap() > 0.9);
        assert_eq!(a.predict_proba(ds.data()).unwrap(), b.predict_proba(ds.data()).unwrap());
    }

    #[test]
    fn single_kernel_model_is_valid() {
        let ds = wave_data(10);
        let m = train_random_kernel(&ds, 1, 9, 1.0).unwrap();
        let p = m.predict_proba(ds.data()).unwrap();
        assert_eq!(p.dim(), (10, 2));
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn batch_permutation_permutes_rows() {
        let ds = wave_data(6);
        let m = train_random_kernel(&ds, 16, 2, 1.0).unwrap();
        let order = [4, 1, 5, 0, 3, 2];
        let permuted = ds.select(&order).unwrap();
        let a = m.transform(ds.data()).unwrap();
        let b = m.transform(permuted.data()).unwrap();
        for (row, &src) in order.iter().enumerate() {
            assert_eq!(b.row(row), a.row(src));
        }
    }

    #[test]
    fn too_short_series_is_a_config_error() {
        let data = Array3::<f64>::zeros((2, 1, 8));
        let ds = MtsDataset::new(data, vec![0, 1], 2, "short", Split::Train).unwrap();
        assert!(matches!(train_random_kernel(&ds, 4, 0, 1.0), Err(Error::Config(_))));
        assert!(matches!(train_random_kernel(&wave_data(4), 0, 0, 1.0), Err(Error::Config(_))));
    }
}
