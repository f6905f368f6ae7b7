//! On-disk dataset directory format.
//!
//! A directory holds `manifest.json` plus raw payloads:
//! `data.f64le` (little-endian float64, row-major `[instance][channel][time]`),
//! `labels.i32le` (little-endian int32) and optionally `ground_truth.u8`
//! (one byte per coordinate). Saliency maps reuse the layout with
//! `kind: "saliency"` and no labels payload.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::data::{GroundTruthMask, MtsDataset, Saliency, Split};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SCHEMA_VERSION: u32 = 1;
pub const BYTE_ORDER: &str = "little-endian";
pub const DTYPE: &str = "float64";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.f64le";
pub const LABELS_FILE: &str = "labels.i32le";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.u8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PayloadKind {
    #[default]
    Dataset,
    Saliency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadFiles {
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    #[serde(default)]
    pub kind: PayloadKind,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub n: usize,
    pub d: usize,
    pub l: usize,
    pub n_classes: usize,
    pub byte_order: String,
    pub dtype: String,
    pub payload_files: PayloadFiles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<bool>,
}

impl DatasetManifest {
    fn check_header(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unknown schema_version {} (supported: {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.byte_order != BYTE_ORDER {
            return Err(Error::Format(format!(
                "byte order mismatch: manifest says {:?}, expected {BYTE_ORDER:?}",
                self.byte_order
            )));
        }
        if self.dtype != DTYPE {
            return Err(Error::Format(format!(
                "unsupported dtype {:?}, expected {DTYPE:?}",
                self.dtype
            )));
        }
        Ok(())
    }

    fn element_count(&self) -> u64 {
        self.n as u64 * self.d as u64 * self.l as u64
    }
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    manifest.check_header()?;
    Ok(manifest)
}

fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn write_f64_payload<T: Scalar>(path: &Path, values: &Array3<T>) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values.iter() {
        bytes.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_payload(dir: &Path, file: &str, expected: u64) -> Result<Vec<u8>> {
    let path = dir.join(file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            file: file.to_string(),
            expected,
            found: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

fn read_f64_payload<T: Scalar>(dir: &Path, manifest: &DatasetManifest) -> Result<Array3<T>> {
    let file = &manifest.payload_files.data;
    let bytes = read_payload(dir, file, manifest.element_count() * 8)?;
    let values: Vec<T> = bytes
        .chunks_exact(8)
        .map(|c| T::from_f64_lossy(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect();
    Array3::from_shape_vec((manifest.n, manifest.d, manifest.l), values)
        .map_err(|e| Error::Format(format!("data payload shape: {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Write a dataset (and optional ground truth) into directory `dir`.
pub fn save_dataset<T: Scalar>(
    ds: &MtsDataset<T>,
    gt: Option<&GroundTruthMask>,
    dir: &Path,
) -> Result<()> {
    if let Some(g) = gt {
        if g.dim() != ds.data().dim() {
            return Err(Error::Dimension(format!(
                "ground truth shape {:?} does not match dataset shape {:?}",
                g.dim(),
                ds.data().dim()
            )));
        }
    }
    create_dir(dir)?;
    write_f64_payload(&dir.join(DATA_FILE), &ds.data().to_owned())?;

    let mut label_bytes = Vec::with_capacity(ds.n_instances() * 4);
    for &l in ds.labels() {
        let l = i32::try_from(l)
            .map_err(|_| Error::Validation(format!("label {l} does not fit in int32")))?;
        label_bytes.extend_from_slice(&l.to_le_bytes());
    }
    let labels_path = dir.join(LABELS_FILE);
    fs::write(&labels_path, label_bytes).map_err(|e| Error::io(&labels_path, e))?;

    if let Some(g) = gt {
        let bytes: Vec<u8> = g.values().iter().copied().collect();
        let gt_path = dir.join(GROUND_TRUTH_FILE);
        fs::write(&gt_path, bytes).map_err(|e| Error::io(&gt_path, e))?;
    }

    write_manifest(
        dir,
        &DatasetManifest {
            schema_version: SCHEMA_VERSION,
            kind: PayloadKind::Dataset,
            name: ds.name().to_string(),
            split: Some(ds.split()),
            n: ds.n_instances(),
            d: ds.n_channels(),
            l: ds.length(),
            n_classes: ds.n_classes(),
            byte_order: BYTE_ORDER.into(),
            dtype: DTYPE.into(),
            payload_files: PayloadFiles {
                data: DATA_FILE.into(),
                labels: Some(LABELS_FILE.into()),
                ground_truth: gt.map(|_| GROUND_TRUTH_FILE.into()),
            },
            method: None,
            normalized: None,
        },
    )
}

/// Read a dataset directory written by [`save_dataset`] (or any conforming writer).
pub fn load_dataset<T: Scalar>(dir: &Path) -> Result<(MtsDataset<T>, Option<GroundTruthMask>)> {
    let manifest = read_manifest(dir)?;
    if manifest.kind != PayloadKind::Dataset {
        return Err(Error::Format(format!(
            "{} holds a {:?} payload, not a dataset",
            dir.display(),
            manifest.kind
        )));
    }
    let data = read_f64_payload::<T>(dir, &manifest)?;

    let labels_file = manifest
        .payload_files
        .labels
        .as_deref()
        .ok_or_else(|| Error::Format("dataset manifest lists no labels payload".into()))?;
    let labels_path = dir.join(labels_file);
    let label_bytes = fs::read(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    if label_bytes.len() != manifest.n * 4 {
        return Err(if label_bytes.len() % 4 == 0 {
            Error::Format(format!(
                "manifest declares {} instances but {labels_file} holds {} labels",
                manifest.n,
                label_bytes.len() / 4
            ))
        } else {
            Error::SizeMismatch {
                file: labels_file.to_string(),
                expected: manifest.n as u64 * 4,
                found: label_bytes.len() as u64,
            }
        });
    }
    let mut labels = Vec::with_capacity(manifest.n);
    for (i, c) in label_bytes.chunks_exact(4).enumerate() {
        let l = i32::from_le_bytes(c.try_into().expect("4-byte chunk"));
        let l = usize::try_from(l)
            .map_err(|_| Error::Validation(format!("negative label {l} at instance {i}")))?;
        labels.push(l);
    }

    let gt = match manifest.payload_files.ground_truth.as_deref() {
        Some(file) => {
            let bytes = read_payload(dir, file, manifest.element_count())?;
            let values = Array3::from_shape_vec((manifest.n, manifest.d, manifest.l), bytes)
                .map_err(|e| Error::Format(format!("ground truth payload shape: {e}")))?;
            Some(GroundTruthMask::new(values)?)
        }
        None => None,
    };

    let ds = MtsDataset::new(
        data,
        labels,
        manifest.n_classes,
        manifest.name,
        manifest.split.unwrap_or(Split::Test),
    )?;
    Ok((ds, gt))
}

pub fn save_saliency<T: Scalar>(s: &Saliency<T>, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_f64_payload(&dir.join(DATA_FILE), &s.values)?;
    let (n, d, l) = s.dim();
    write_manifest(
        dir,
        &DatasetManifest {
            schema_version: SCHEMA_VERSION,
            kind: PayloadKind::Saliency,
            name: s.method.clone(),
            split: None,
            n,
            d,
            l,
            n_classes: 0,
            byte_order: BYTE_ORDER.into(),
            dtype: DTYPE.into(),
            payload_files: PayloadFiles {
                data: DATA_FILE.into(),
                labels: None,
                ground_truth: None,
            },
            method: Some(s.method.clone()),
            normalized: Some(s.normalized),
        },
    )
}

pub fn load_saliency<T: Scalar>(dir: &Path) -> Result<Saliency<T>> {
    let manifest = read_manifest(dir)?;
    if manifest.kind != PayloadKind::Saliency {
        return Err(Error::Format(format!(
            "{} holds a dataset payload, not a saliency map",
            dir.display()
        )));
    }
    let values = read_f64_payload::<T>(dir, &manifest)?;
    Ok(Saliency {
        values,
        method: manifest.method.unwrap_or(manifest.name),
        normalized: manifest.normalized.unwrap_or(false),
    })
}

/// Import a wide CSV with one row per (instance, channel):
/// `instance,channel,label,v_0,...,v_{L-1}`. A header row is optional.
pub fn import_csv(path: &Path, name: &str, split: Split) -> Result<MtsDataset<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;

    // instance id -> channel -> (label, values)
    let mut rows: BTreeMap<i64, BTreeMap<usize, (usize, Vec<f64>)>> = BTreeMap::new();
    let mut length: Option<usize> = None;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 4 {
            return Err(Error::Format(format!(
                "row {}: need instance, channel, label and at least one value",
                line + 1
            )));
        }
        let Ok(instance) = record[0].parse::<i64>() else {
            if line == 0 {
                continue; // header
            }
            return Err(Error::Format(format!("row {}: bad instance id {:?}", line + 1, &record[0])));
        };
        let parse_usize = |field: &str, what: &str| {
            field
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("row {}: bad {what} {field:?}", line + 1)))
        };
        let channel = parse_usize(&record[1], "channel")?;
        let label = parse_usize(&record[2], "label")?;
        let values = record
            .iter()
            .skip(3)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: bad value {f:?}", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        match length {
            None => length = Some(values.len()),
            Some(l) if l != values.len() => {
                return Err(Error::Format(format!(
                    "row {}: {} values, expected {l} (variable length is unsupported)",
                    line + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        if rows
            .entry(instance)
            .or_default()
            .insert(channel, (label, values))
            .is_some()
        {
            return Err(Error::Format(format!(
                "duplicate row for instance {instance}, channel {channel}"
            )));
        }
    }

    let l = length.ok_or_else(|| Error::Format("csv holds no data rows".into()))?;
    let d = rows.values().map(|c| c.len()).max().unwrap_or(0);
    let n = rows.len();
    let mut data = Array3::zeros((n, d, l));
    let mut labels = Vec::with_capacity(n);
    for (i, (id, channels)) in rows.iter().enumerate() {
        if channels.len() != d || channels.keys().copied().ne(0..d) {
            return Err(Error::Format(format!(
                "instance {id} must have channels 0..{d} exactly once"
            )));
        }
        let label = channels[&0].0;
        for (c, (lab, values)) in channels {
            if *lab != label {
                return Err(Error::Format(format!(
                    "instance {id} has conflicting labels {label} and {lab}"
                )));
            }
            for (t, &v) in values.iter().enumerate() {
                data[[i, *c, t]] = v;
            }
        }
        labels.push(label);
    }
    let n_classes = labels.iter().max().map_or(1, |m| m + 1);
    MtsDataset::new(data, labels, n_classes, name, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn toy() -> (MtsDataset<f64>, GroundTruthMask) {
        let data = Array3::from_shape_fn((3, 2, 4), |(i, c, t)| (i * 100 + c * 10 + t) as f64 * 0.1 - 1.3);
        let mut g = Array3::zeros((3, 2, 4));
        g[[1, 0, 2]] = 1;
        (
            MtsDataset::new(data, vec![0, 1, 1], 2, "toy", Split::Train).unwrap(),
            GroundTruthMask::new(g).unwrap(),
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (ds, gt) = toy();
        save_dataset(&ds, Some(&gt), dir.path()).unwrap();
        let (back, gt_back) = load_dataset::<f64>(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(gt_back.unwrap(), gt);
    }

    #[test]
    fn truncated_payload_is_a_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ds, _) = toy();
        save_dataset(&ds, None, dir.path()).unwrap();
        let path = dir.path().join(DATA_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        match load_dataset::<f64>(dir.path()) {
            Err(Error::SizeMismatch { expected, found, .. }) => {
                assert_eq!(expected, 3 * 2 * 4 * 8);
                assert_eq!(found, expected - 3);
            }
            other => panic!("expected size mismatch, got {other:?}"),
        }
    }

    #[test]
    fn short_labels_name_both_counts() {
        let dir = tempfile::tempdir().unwrap();
        let data = Array3::<f64>::zeros((10, 1, 2));
        let ds = MtsDataset::new(data, vec![0; 10], 1, "x", Split::Test).unwrap();
        save_dataset(&ds, None, dir.path()).unwrap();
        let path = dir.path().join(LABELS_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..36]).unwrap();
        let msg = load_dataset::<f64>(dir.path()).unwrap_err().to_string();
        assert!(msg.contains("10") && msg.contains('9'), "{msg}");
    }

    #[test]
    fn unknown_schema_and_byte_order_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ds, _) = toy();
        save_dataset(&ds, None, dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap();

        fs::write(&path, text.replace("\"schema_version\": 1", "\"schema_version\": 9")).unwrap();
        assert!(load_dataset::<f64>(dir.path()).unwrap_err().to_string().contains("schema_version"));

        fs::write(&path, text.replace("little-endian", "big-endian")).unwrap();
        assert!(load_dataset::<f64>(dir.path()).unwrap_err().to_string().contains("byte order"));
    }

    #[test]
    fn saliency_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Saliency::new(Array3::from_shape_fn((2, 2, 3), |(i, c, t)| (i + c + t) as f64 / 7.0), "feature_ablation");
        s.normalized = true;
        save_saliency(&s, dir.path()).unwrap();
        assert_eq!(load_saliency::<f64>(dir.path()).unwrap(), s);
        assert!(load_dataset::<f64>(dir.path()).is_err());
    }

    #[test]
    fn csv_import_builds_dense_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(
            &path,
            "instance,channel,label,t0,t1,t2\n7,1,1,4,5,6\n7,0,1,1,2,3\n2,0,0,0,0,1\n2,1,0,1,0,0\n",
        )
        .unwrap();
        let ds = import_csv(&path, "x", Split::Train).unwrap();
        assert_eq!(ds.data().dim(), (2, 2, 3));
        assert_eq!(ds.labels(), &[0, 1]);
        assert_eq!(ds.data()[[1, 1, 2]], 6.0);
        assert_eq!(ds.n_classes(), 2);
    }

    #[test]
    fn csv_import_rejects_missing_channel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        fs::write(&path, "0,0,0,1,2\n0,1,0,1,2\n1,0,1,3,4\n").unwrap();
        assert!(import_csv(&path, "x", Split::Train).is_err());
    }
}
