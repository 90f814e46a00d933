//! "NVSM" weights files shared by the CNN and the autoencoder.
//!
//! ```text
//! b"NVSM" | version: u32 = 1 | layer count: u32
//! per layer:
//!   kind: u32 (0 = conv, 1 = dense)
//!   conv:  in_channels, out_channels, kernel, stride  (u32 each)
//!   dense: inputs, outputs                            (u32 each)
//!   weights, then biases: f32, row-major (conv is output-channel-major)
//! ```
//! All integers and floats are little-endian. Parameters are stored as `f32`,
//! so saving quantizes; a file read back and re-encoded is byte-identical.

use std::path::Path;

use crate::autoencoder::AeModel;
use crate::cnn::{CnnModel, ConvLayer, ConvLayerSpec};
use crate::error::{Error, Result};
use crate::nn::DenseLayer;

pub const MAGIC: &[u8; 4] = b"NVSM";
pub const VERSION: u32 = 1;

const KIND_CONV: u32 = 0;
const KIND_DENSE: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerRecord {
    Conv {
        spec: ConvLayerSpec,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
    Dense {
        inputs: usize,
        outputs: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightsFile {
    pub layers: Vec<LayerRecord>,
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn dense_record(d: &DenseLayer) -> LayerRecord {
    LayerRecord::Dense {
        inputs: d.inputs(),
        outputs: d.outputs(),
        weights: to_f32(d.weights.as_slice().expect("layout")),
        bias: to_f32(d.bias.as_slice().expect("layout")),
    }
}

impl WeightsFile {
    pub fn from_cnn(model: &CnnModel) -> Self {
        let mut layers: Vec<LayerRecord> = model
            .conv_layers()
            .iter()
            .map(|c| LayerRecord::Conv {
                spec: c.spec,
                weights: to_f32(c.weights.as_slice().expect("layout")),
                bias: to_f32(c.bias.as_slice().expect("layout")),
            })
            .collect();
        layers.extend(model.dense_layers().iter().map(dense_record));
        Self { layers }
    }

    pub fn from_ae(model: &AeModel) -> Self {
        Self {
            layers: model.layers().iter().map(dense_record).collect(),
        }
    }

    /// The conv/dense layer records carry no input geometry, so the CNN's
    /// input dims are supplied by the caller.
    pub fn to_cnn(&self, input_dims: (usize, usize)) -> Result<CnnModel> {
        let mut conv = Vec::new();
        let mut dense = Vec::new();
        for (i, rec) in self.layers.iter().enumerate() {
            match rec {
                LayerRecord::Conv { spec, weights, bias } => {
                    if !dense.is_empty() {
                        return Err(Error::InvalidData(format!("conv layer {i} follows a dense layer")));
                    }
                    conv.push(ConvLayer::from_parts(*spec, to_f64(weights), to_f64(bias))?);
                }
                LayerRecord::Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                } => dense.push(DenseLayer::from_parts(*inputs, *outputs, to_f64(weights), to_f64(bias))?),
            }
        }
        CnnModel::from_layers(input_dims, conv, dense)
    }

    pub fn to_ae(&self) -> Result<AeModel> {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, rec)| match rec {
                LayerRecord::Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                } => DenseLayer::from_parts(*inputs, *outputs, to_f64(weights), to_f64(bias)),
                LayerRecord::Conv { .. } => Err(Error::InvalidData(format!(
                    "autoencoder weights contain a conv layer at index {i}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        AeModel::from_layers(layers)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, self.layers.len() as u32);
        for rec in &self.layers {
            match rec {
                LayerRecord::Conv { spec, weights, bias } => {
                    put_u32(&mut out, KIND_CONV);
                    for d in [spec.in_channels, spec.out_channels, spec.kernel, spec.stride] {
                        put_u32(&mut out, d as u32);
                    }
                    put_f32s(&mut out, weights);
                    put_f32s(&mut out, bias);
                }
                LayerRecord::Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                } => {
                    put_u32(&mut out, KIND_DENSE);
                    put_u32(&mut out, *inputs as u32);
                    put_u32(&mut out, *outputs as u32);
                    put_f32s(&mut out, weights);
                    put_f32s(&mut out, bias);
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::InvalidData("not an NVSM weights file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::InvalidData(format!("unsupported NVSM version {version}")));
        }
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(64));
        for i in 0..count {
            let rec = match r.u32()? {
                KIND_CONV => {
                    let spec = ConvLayerSpec::new(r.usize()?, r.usize()?, r.usize()?, r.usize()?);
                    let n_w = spec
                        .out_channels
                        .checked_mul(spec.in_channels * spec.kernel * spec.kernel)
                        .ok_or_else(|| Error::InvalidData("conv layer size overflow".into()))?;
                    LayerRecord::Conv {
                        spec,
                        weights: r.f32s(n_w)?,
                        bias: r.f32s(spec.out_channels)?,
                    }
                }
                KIND_DENSE => {
                    let inputs = r.usize()?;
                    let outputs = r.usize()?;
                    let n_w = inputs
                        .checked_mul(outputs)
                        .ok_or_else(|| Error::InvalidData("dense layer size overflow".into()))?;
                    LayerRecord::Dense {
                        inputs,
                        outputs,
                        weights: r.f32s(n_w)?,
                        bias: r.f32s(outputs)?,
                    }
                }
                other => return Err(Error::InvalidData(format!("layer {i}: unknown kind tag {other}"))),
            };
            layers.push(rec);
        }
        if r.pos != bytes.len() {
            return Err(Error::InvalidData(format!(
                "{} trailing bytes after last layer",
                bytes.len() - r.pos
            )));
        }
        Ok(Self { layers })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| Error::InvalidData(format!("{}: {e}", path.display())))
    }
}

pub fn save_cnn(model: &CnnModel, path: impl AsRef<Path>) -> Result<()> {
    WeightsFile::from_cnn(model).write(path)
}

pub fn load_cnn(path: impl AsRef<Path>, input_dims: (usize, usize)) -> Result<CnnModel> {
    WeightsFile::read(path)?.to_cnn(input_dims)
}

pub fn save_ae(model: &AeModel, path: impl AsRef<Path>) -> Result<()> {
    WeightsFile::from_ae(model).write(path)
}

pub fn load_ae(path: impl AsRef<Path>) -> Result<AeModel> {
    WeightsFile::read(path)?.to_ae()
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    out.reserve(4 * v.len());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::InvalidData("truncated NVSM weights file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::InvalidData("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}
