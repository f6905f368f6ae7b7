//! Model files: one JSON header line, then a little-endian float64 payload.
//!
//! The header lists the payload arrays in order with their lengths; the
//! payload is their concatenation.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Kernel, Model, RandomKernelModel, RidgeHead, TabularRidgeModel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "tsxb-model";

#[derive(Debug, Serialize, Deserialize)]
struct KernelHeader {
    length: usize,
    dilation: usize,
    padding: usize,
    channels: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
    d: usize,
    l: usize,
    n_classes: usize,
    n_features: usize,
    lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default)]
    kernels: Vec<KernelHeader>,
    /// `(name, element count)` of every payload array, in order.
    payload: Vec<(String, usize)>,
}

struct Payload {
    values: Vec<f64>,
    sections: Vec<(String, usize)>,
}

impl Payload {
    fn new() -> Self {
        Self {
            values: Vec::new(),
            sections: Vec::new(),
        }
    }

    fn push<'a, T: Scalar>(&mut self, name: &str, values: impl IntoIterator<Item = &'a T>) {
        let before = self.values.len();
        self.values.extend(values.into_iter().map(|v| v.to_f64_lossy()));
        self.sections.push((name.to_string(), self.values.len() - before));
    }
}

fn head_payload<T: Scalar>(head: &RidgeHead<T>, payload: &mut Payload) {
    payload.push("means", head.means.iter());
    payload.push("inv_stds", head.inv_stds.iter());
    payload.push("weights", head.weights.iter());
}

pub fn save_model<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    let mut payload = Payload::new();
    let (d, l, head, seed, kernels) = match model {
        Model::Tabular(m) => (m.d, m.l, &m.head, None, Vec::new()),
        Model::RandomKernel(m) => {
            let kernels = m
                .kernels
                .iter()
                .map(|k| KernelHeader {
                    length: k.length,
                    dilation: k.dilation,
                    padding: k.padding,
                    channels: k.channels.clone(),
                })
                .collect();
            (m.d, m.l, &m.head, Some(m.seed), kernels)
        }
    };
    head_payload(head, &mut payload);
    if let Model::RandomKernel(m) = model {
        payload.push("kernel_biases", m.kernels.iter().map(|k| &k.bias));
        payload.push("kernel_weights", m.kernels.iter().flat_map(|k| k.weights.iter()));
    }
    let header = Header {
        format: FORMAT_TAG.into(),
        version: MODEL_FORMAT_VERSION,
        kind: model.kind().into(),
        d,
        l,
        n_classes: head.n_classes(),
        n_features: head.n_features(),
        lambda: head.lambda,
        seed,
        kernels,
        payload: payload.sections,
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.reserve(payload.values.len() * 8);
    for v in payload.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    values: &'a [u8],
    sections: std::vec::IntoIter<(String, usize)>,
}

impl Reader<'_> {
    fn take<T: Scalar>(&mut self, name: &str, expected: usize) -> Result<Vec<T>> {
        let (found, len) = self
            .sections
            .next()
            .ok_or_else(|| Error::Format(format!("model payload lacks section {name:?}")))?;
        if found != name || len != expected {
            return Err(Error::Format(format!(
                "model payload section {found:?} ({len} values) where {name:?} ({expected} values) was expected"
            )));
        }
        let (head, rest) = self.values.split_at(len * 8);
        self.values = rest;
        Ok(head
            .chunks_exact(8)
            .map(|c| T::from_f64_lossy(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect())
    }
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format(format!("{}: missing model header", path.display())))?;
    let header: Header = serde_json::from_slice(&bytes[..split])
        .map_err(|e| Error::Format(format!("{}: unreadable model header: {e}", path.display())))?;
    if header.format != FORMAT_TAG {
        return Err(Error::Format(format!("{}: not a model file", path.display())));
    }
    if header.version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
            header.version
        )));
    }
    let body = &bytes[split + 1..];
    let total: usize = header.payload.iter().map(|(_, n)| n).sum();
    if body.len() != total * 8 {
        return Err(Error::SizeMismatch {
            file: path.display().to_string(),
            expected: (total * 8) as u64,
            found: body.len() as u64,
        });
    }
    let mut reader = Reader {
        values: body,
        sections: header.payload.clone().into_iter(),
    };
    let (p, c) = (header.n_features, header.n_classes);
    let means = Array1::from(reader.take::<T>("means", p)?);
    let inv_stds = Array1::from(reader.take::<T>("inv_stds", p)?);
    let weights = Array2::from_shape_vec((p + 1, c), reader.take::<T>("weights", (p + 1) * c)?)
        .map_err(|e| Error::Format(e.to_string()))?;
    let head = RidgeHead::from_parts(means, inv_stds, weights, header.lambda);

    match header.kind.as_str() {
        "tabular" => Ok(Model::Tabular(TabularRidgeModel {
            d: header.d,
            l: header.l,
            head,
        })),
        "random_kernel" => {
            let biases = reader.take::<T>("kernel_biases", header.kernels.len())?;
            let n_weights = header.kernels.iter().map(|k| k.length * k.channels.len()).sum();
            let weights = reader.take::<T>("kernel_weights", n_weights)?;
            let mut offset = 0;
            let kernels = header
                .kernels
                .into_iter()
                .zip(biases)
                .map(|(k, bias)| {
                    let len = k.length * k.channels.len();
                    let w = weights[offset..offset + len].to_vec();
                    offset += len;
                    Kernel {
                        length: k.length,
                        dilation: k.dilation,
                        padding: k.padding,
                        bias,
                        channels: k.channels,
                        weights: w,
                    }
                })
                .collect();
            Ok(Model::RandomKernel(RandomKernelModel {
                d: header.d,
                l: header.l,
                seed: header.seed.unwrap_or(0),
                kernels,
                head,
            }))
        }
        other => Err(Error::Format(format!("unknown model kind {other:?}"))),
    }
}
