//! Channel importance from saliency maps, channel selection and the
//! retrain-on-subset study.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{normalize_saliency, MtsDataset, Saliency};
use crate::error::{Error, Result};
use crate::models::{accuracy, Classifier};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelImportance {
    /// Mean attribution per channel over instances and time.
    pub r: Vec<f64>,
    pub method: String,
    pub dataset: String,
}

impl ChannelImportance {
    pub fn ranking(&self) -> Vec<usize> {
        rank_channels(&self.r)
    }
}

fn mean_per_channel<T: Scalar>(s: &Saliency<T>) -> Vec<f64> {
    let (n, d, l) = s.dim();
    let denom = (n * l) as f64;
    (0..d)
        .map(|c| {
            s.values
                .index_axis(Axis(1), c)
                .iter()
                .map(|v| v.to_f64_lossy())
                .sum::<f64>()
                / denom
        })
        .collect()
}

/// `r_c` from the normalized saliency; raw maps are normalized first.
pub fn channel_importance<T: Scalar>(saliency: &Saliency<T>, ds: &MtsDataset<T>) -> Result<ChannelImportance> {
    saliency.check_shape(ds)?;
    let r = if saliency.normalized {
        mean_per_channel(saliency)
    } else {
        mean_per_channel(&normalize_saliency(saliency)?)
    };
    Ok(ChannelImportance {
        r,
        method: saliency.method.clone(),
        dataset: ds.name().to_string(),
    })
}

/// `r_c` straight from the attributions as given, negative values included.
pub fn channel_importance_raw<T: Scalar>(saliency: &Saliency<T>, ds: &MtsDataset<T>) -> Result<ChannelImportance> {
    saliency.check_shape(ds)?;
    Ok(ChannelImportance {
        r: mean_per_channel(saliency),
        method: saliency.method.clone(),
        dataset: ds.name().to_string(),
    })
}

/// Channel indices by descending `r`, ties by ascending index.
pub fn rank_channels(r: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..r.len()).collect();
    idx.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));
    idx
}

/// The first `k` channels of the ranking.
pub fn select_top(r: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > r.len() {
        return Err(Error::Config(format!("cannot select {k} of {} channels", r.len())));
    }
    let mut ranking = rank_channels(r);
    ranking.truncate(k);
    Ok(ranking)
}

/// Keep the listed channels in the listed order.
pub fn subset_dataset<T: Scalar>(ds: &MtsDataset<T>, channels: &[usize]) -> Result<MtsDataset<T>> {
    if channels.is_empty() {
        return Err(Error::Config("channel subset is empty".into()));
    }
    let d = ds.n_channels();
    if let Some(&bad) = channels.iter().find(|&&c| c >= d) {
        return Err(Error::Config(format!("channel {bad} out of range for {d} channels")));
    }
    let mut seen = vec![false; d];
    for &c in channels {
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::Config(format!("channel {c} listed twice")));
        }
    }
    let data = ds.data().select(Axis(1), channels);
    MtsDataset::new(data, ds.labels().to_vec(), ds.n_classes(), ds.name(), ds.split())
}

/// Trains a classifier on a (channel-subset) training set.
pub type Trainer<'a, T> = dyn Fn(&MtsDataset<T>) -> Result<Box<dyn Classifier<T>>> + Sync + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub k: usize,
    /// Selected channels in their original order.
    pub selected: Vec<usize>,
    pub accuracy_after: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: String,
    pub dataset: String,
    pub r: Vec<f64>,
    pub ranking: Vec<usize>,
    /// Test accuracy with every channel.
    pub accuracy_before: BTreeMap<String, f64>,
    pub entries: Vec<SelectionEntry>,
}

impl SelectionReport {
    pub fn entry(&self, k: usize) -> Option<&SelectionEntry> {
        self.entries.iter().find(|e| e.k == k)
    }
}

fn train_and_score<T: Scalar>(
    trainers: &[(&str, &Trainer<'_, T>)],
    train: &MtsDataset<T>,
    test: &MtsDataset<T>,
) -> Result<BTreeMap<String, f64>> {
    trainers
        .iter()
        .map(|(name, fit)| {
            let model = fit(train)?;
            Ok((name.to_string(), accuracy(model.as_ref(), test)?))
        })
        .collect()
}

/// For every `k`: keep the top-`k` channels of `importance`, retrain each
/// named trainer on the reduced training set and score it on the reduced
/// test set. The subset keeps the original channel order, so `k = d`
/// reproduces the full-channel run exactly.
pub fn selection_study<T: Scalar>(
    train: &MtsDataset<T>,
    test: &MtsDataset<T>,
    importance: &ChannelImportance,
    ks: &[usize],
    trainers: &[(&str, &Trainer<'_, T>)],
) -> Result<SelectionReport> {
    let d = train.n_channels();
    if test.n_channels() != d || importance.r.len() != d {
        return Err(Error::Dimension(format!(
            "channel counts differ: train {d}, test {}, importance {}",
            test.n_channels(),
            importance.r.len()
        )));
    }
    if trainers.is_empty() {
        return Err(Error::Config("no trainers given".into()));
    }
    let accuracy_before = train_and_score(trainers, train, test)?;
    let entries = ks
        .par_iter()
        .map(|&k| {
            let mut selected = select_top(&importance.r, k)?;
            selected.sort_unstable();
            let accuracy_after =
                train_and_score(trainers, &subset_dataset(train, &selected)?, &subset_dataset(test, &selected)?)?;
            Ok(SelectionEntry {
                k,
                selected,
                accuracy_after,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SelectionReport {
        method: importance.method.clone(),
        dataset: importance.dataset.clone(),
        r: importance.r.clone(),
        ranking: importance.ranking(),
        accuracy_before,
        entries,
    })
}

/// `channel, r, rank` for the mean over methods, then `r_<method>` and
/// `rank_<method>` per method. Ranks are 1-based.
pub fn write_channels_csv(importances: &[ChannelImportance], path: &Path) -> Result<()> {
    let Some(first) = importances.first() else {
        return Err(Error::Config("no channel importances to write".into()));
    };
    let d = first.r.len();
    if importances.iter().any(|i| i.r.len() != d) {
        return Err(Error::Dimension("channel importances differ in length".into()));
    }
    let mean: Vec<f64> = (0..d)
        .map(|c| importances.iter().map(|i| i.r[c]).sum::<f64>() / importances.len() as f64)
        .collect();
    let rank_of = |r: &[f64]| {
        let mut pos = vec![0; d];
        for (p, c) in rank_channels(r).into_iter().enumerate() {
            pos[c] = p + 1;
        }
        pos
    };
    let mean_rank = rank_of(&mean);
    let per_rank: Vec<Vec<usize>> = importances.iter().map(|i| rank_of(&i.r)).collect();

    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["channel".to_string(), "r".into(), "rank".into()];
    for i in importances {
        header.push(format!("r_{}", i.method));
        header.push(format!("rank_{}", i.method));
    }
    w.write_record(&header)?;
    for c in 0..d {
        let mut rec = vec![c.to_string(), format!("{:.6}", mean[c]), mean_rank[c].to_string()];
        for (i, ranks) in importances.iter().zip(&per_rank) {
            rec.push(format!("{:.6}", i.r[c]));
            rec.push(ranks[c].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
