//! Partitions of the `d × L` coordinates into attribution groups.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkGrouping {
    /// Every channel is cut into its own chunks: `d · n` groups.
    #[default]
    ChannelWise,
    /// Chunk `j` of every channel forms one group: `n` groups.
    CrossChannel,
}

/// How a series is cut into groups. `n_chunks = None` is point-wise
/// attribution (one group per coordinate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChunkSpec {
    pub n_chunks: Option<usize>,
    #[serde(default)]
    pub grouping: ChunkGrouping,
}

impl ChunkSpec {
    pub const POINT_WISE: ChunkSpec = ChunkSpec {
        n_chunks: None,
        grouping: ChunkGrouping::ChannelWise,
    };

    pub fn chunks(n: usize) -> Self {
        Self {
            n_chunks: Some(n),
            grouping: ChunkGrouping::ChannelWise,
        }
    }

    pub fn cross_channel(n: usize) -> Self {
        Self {
            n_chunks: Some(n),
            grouping: ChunkGrouping::CrossChannel,
        }
    }

    /// Short stable label used in file names and reports: `point`, `10`,
    /// `10x` (cross-channel).
    pub fn label(&self) -> String {
        match (self.n_chunks, self.grouping) {
            (None, _) => "point".into(),
            (Some(n), ChunkGrouping::ChannelWise) => n.to_string(),
            (Some(n), ChunkGrouping::CrossChannel) => format!("{n}x"),
        }
    }
}

impl fmt::Display for ChunkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ChunkSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "point" || s == "pointwise" || s == "0" {
            return Ok(Self::POINT_WISE);
        }
        let (digits, cross) = match s.strip_suffix('x') {
            Some(d) => (d, true),
            None => (s, false),
        };
        let n: usize = digits
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Config(format!("bad chunk spec {s:?}; use `point`, `<n>` or `<n>x`")))?;
        Ok(if cross { Self::cross_channel(n) } else { Self::chunks(n) })
    }
}

/// A contiguous run `[start, end)` of time points on one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub channel: usize,
    pub start: usize,
    pub end: usize,
}

/// A partition of the `d × L` coordinates: every coordinate lies in exactly
/// one group.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrouping {
    d: usize,
    l: usize,
    groups: Vec<Vec<Segment>>,
}

/// Boundaries of `n` near-equal chunks of `0..l`: the first `l mod n` chunks
/// get one extra point.
pub fn chunk_bounds(l: usize, n: usize) -> Vec<(usize, usize)> {
    let (q, r) = (l / n, l % n);
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for j in 0..n {
        let len = q + usize::from(j < r);
        out.push((start, start + len));
        start += len;
    }
    out
}

pub fn make_grouping(d: usize, l: usize, spec: ChunkSpec) -> Result<FeatureGrouping> {
    if d == 0 || l == 0 {
        return Err(Error::Config(format!("cannot group an empty {d} x {l} series")));
    }
    let groups = match spec.n_chunks {
        None => (0..d)
            .flat_map(|c| (0..l).map(move |t| vec![Segment { channel: c, start: t, end: t + 1 }]))
            .collect(),
        Some(n) => {
            if n == 0 || n > l {
                return Err(Error::Config(format!("chunk count {n} must be in [1, {l}]")));
            }
            let bounds = chunk_bounds(l, n);
            match spec.grouping {
                ChunkGrouping::ChannelWise => (0..d)
                    .flat_map(|c| {
                        bounds
                            .iter()
                            .map(move |&(start, end)| vec![Segment { channel: c, start, end }])
                    })
                    .collect(),
                ChunkGrouping::CrossChannel => bounds
                    .iter()
                    .map(|&(start, end)| (0..d).map(|c| Segment { channel: c, start, end }).collect())
                    .collect(),
            }
        }
    };
    Ok(FeatureGrouping { d, l, groups })
}

impl FeatureGrouping {
    /// Build from explicit groups, checking the partition property.
    pub fn from_groups(d: usize, l: usize, groups: Vec<Vec<Segment>>) -> Result<Self> {
        let mut seen = Array2::<u8>::zeros((d, l));
        for (g, segs) in groups.iter().enumerate() {
            if segs.is_empty() {
                return Err(Error::Config(format!("group {g} is empty")));
            }
            for s in segs {
                if s.channel >= d || s.start >= s.end || s.end > l {
                    return Err(Error::Config(format!("group {g} has an invalid segment {s:?}")));
                }
                for t in s.start..s.end {
                    if seen[[s.channel, t]] != 0 {
                        return Err(Error::Config(format!(
                            "coordinate ({}, {t}) appears in more than one group",
                            s.channel
                        )));
                    }
                    seen[[s.channel, t]] = 1;
                }
            }
        }
        if let Some(((c, t), _)) = seen.indexed_iter().find(|(_, &v)| v == 0) {
            return Err(Error::Config(format!("coordinate ({c}, {t}) is not covered by any group")));
        }
        Ok(Self { d, l, groups })
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.d, self.l)
    }

    pub fn group(&self, g: usize) -> &[Segment] {
        &self.groups[g]
    }

    pub fn group_size(&self, g: usize) -> usize {
        self.groups[g].iter().map(|s| s.end - s.start).sum()
    }

    /// Copy the coordinates of group `g` from `src` into `dst`.
    #[inline]
    pub fn copy_group<T: Scalar>(&self, g: usize, src: ArrayView2<'_, T>, dst: &mut ArrayViewMut2<'_, T>) {
        for s in &self.groups[g] {
            for t in s.start..s.end {
                dst[[s.channel, t]] = src[[s.channel, t]];
            }
        }
    }

    /// Block-constant `d × L` map giving every coordinate its group's value.
    pub fn expand<T: Scalar>(&self, values: &[T]) -> Result<Array2<T>> {
        if values.len() != self.groups.len() {
            return Err(Error::Dimension(format!(
                "{} group values for {} groups",
                values.len(),
                self.groups.len()
            )));
        }
        let mut out = Array2::zeros((self.d, self.l));
        for (segs, &v) in self.groups.iter().zip(values) {
            for s in segs {
                out.slice_mut(ndarray::s![s.channel, s.start..s.end]).fill(v);
            }
        }
        Ok(out)
    }

    /// Mean of `map` over each group; inverse of [`expand`](Self::expand).
    pub fn group_means<T: Scalar>(&self, map: ArrayView2<'_, T>) -> Vec<T> {
        self.groups
            .iter()
            .enumerate()
            .map(|(g, segs)| {
                let sum: T = segs
                    .iter()
                    .flat_map(|s| (s.start..s.end).map(move |t| map[[s.channel, t]]))
                    .sum();
                sum / T::from_usize_lossy(self.group_size(g))
            })
            .collect()
    }
}
