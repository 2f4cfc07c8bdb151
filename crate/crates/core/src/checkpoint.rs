//! Binary model checkpoints.
//!
//! A checkpoint stores the full architecture, every parameter tensor and
//! batch-norm running statistic, the initialization seed, and (optionally) a
//! linear classifier head, and round-trips all of it bit-exactly.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "ANCM"  u32 version  input shape  u32 layer count  layer specs...
//! u64 seed  parameter tensors...  u8 head flag  [head block]
//! ```
//!
//! The input shape is a `u8` tag (0 flat, 1 image) followed by its `u32`
//! dimensions. Each layer spec is a `u8` tag plus its fields; each tensor is a
//! `u64` length followed by that many `f64`s. Tensor shapes are derived from
//! the specs on load, checked against the stored lengths, and the reassembled
//! network validates them once more.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Shape};
use crate::ncm::SoftmaxHead;
use crate::network::{LayerParams, LayerSpec, Network};

pub const MAGIC: [u8; 4] = *b"ANCM";
pub const VERSION: u32 = 1;

/// A deserialized checkpoint: the network plus the classifier head, if the
/// model was trained with one.
#[derive(Debug, Clone)]
pub struct Model {
    pub net: Network,
    pub head: Option<SoftmaxHead>,
}

/// Writes `net` (and `head`, if given) to `path`.
pub fn save(path: &Path, net: &Network, head: Option<&SoftmaxHead>) -> Result<()> {
    fs::write(path, to_bytes(net, head))?;
    Ok(())
}

/// Reads a checkpoint written by [`save`].
pub fn load(path: &Path) -> Result<Model> {
    from_bytes(&fs::read(path)?)
}

fn push_u32(out: &mut Vec<u8>, value: usize) {
    let v = u32::try_from(value).expect("dimension fits in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_tensor(out: &mut Vec<u8>, data: &[f64]) {
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes without touching the filesystem.
pub fn to_bytes(net: &Network, head: Option<&SoftmaxHead>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    match net.input_shape() {
        Shape::Flat(len) => {
            out.push(0);
            push_u32(&mut out, len);
        }
        Shape::Image {
            channels,
            height,
            width,
        } => {
            out.push(1);
            push_u32(&mut out, channels);
            push_u32(&mut out, height);
            push_u32(&mut out, width);
        }
    }
    push_u32(&mut out, net.specs().len());
    for spec in net.specs() {
        match *spec {
            LayerSpec::Dense { input, output } => {
                out.push(0);
                push_u32(&mut out, input);
                push_u32(&mut out, output);
            }
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                out.push(1);
                push_u32(&mut out, in_channels);
                push_u32(&mut out, out_channels);
            }
            LayerSpec::MaxPool2x2 => out.push(2),
            LayerSpec::BatchNorm { channels } => {
                out.push(3);
                push_u32(&mut out, channels);
            }
            LayerSpec::ReLU => out.push(4),
            LayerSpec::Dropout { p } => {
                out.push(5);
                out.extend_from_slice(&p.to_le_bytes());
            }
            LayerSpec::Flatten => out.push(6),
        }
    }
    out.extend_from_slice(&net.seed().to_le_bytes());
    for params in net.params() {
        match params {
            LayerParams::None => {}
            LayerParams::Dense { w, b } => {
                push_tensor(&mut out, w.data());
                push_tensor(&mut out, b);
            }
            LayerParams::Conv { w, b } => {
                push_tensor(&mut out, w);
                push_tensor(&mut out, b);
            }
            LayerParams::BatchNorm {
                scale,
                shift,
                running_mean,
                running_var,
            } => {
                push_tensor(&mut out, scale);
                push_tensor(&mut out, shift);
                push_tensor(&mut out, running_mean);
                push_tensor(&mut out, running_var);
            }
        }
    }
    match head {
        None => out.push(0),
        Some(h) => {
            out.push(1);
            push_u32(&mut out, h.w.rows());
            push_u32(&mut out, h.w.cols());
            push_tensor(&mut out, h.w.data());
            push_tensor(&mut out, &h.b);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let Some(chunk) = self.bytes.get(self.offset..self.offset + len) else {
            return Err(Error::Parse {
                offset: self.offset as u64,
                message: format!("checkpoint truncated reading {what}"),
            });
        };
        self.offset += len;
        Ok(chunk)
    }

    fn byte(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let chunk = self.take(4, what)?;
        Ok(u32::from_le_bytes(chunk.try_into().expect("4-byte slice")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let chunk = self.take(8, what)?;
        Ok(u64::from_le_bytes(chunk.try_into().expect("8-byte slice")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let chunk = self.take(8, what)?;
        Ok(f64::from_le_bytes(chunk.try_into().expect("8-byte slice")))
    }

    /// Reads one length-prefixed tensor, insisting on the size the
    /// architecture calls for.
    fn tensor(&mut self, expect: usize, what: &str) -> Result<Vec<f64>> {
        let len_offset = self.offset;
        let stored = self.u64(what)?;
        if stored != expect as u64 {
            return Err(Error::Parse {
                offset: len_offset as u64,
                message: format!("{what} holds {stored} values, layer needs {expect}"),
            });
        }
        let chunk = self.take(expect * 8, what)?;
        let mut data = Vec::with_capacity(expect);
        for v in chunk.chunks_exact(8) {
            data.push(f64::from_le_bytes(v.try_into().expect("8-byte slice")));
        }
        Ok(data)
    }
}

/// Deserializes a checkpoint produced by [`to_bytes`].
pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, offset: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "not a model checkpoint (bad magic)".into(),
        });
    }
    let version_offset = r.offset;
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::Parse {
            offset: version_offset as u64,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let shape_offset = r.offset;
    let input_shape = match r.byte("input shape tag")? {
        0 => Shape::Flat(r.u32("input length")?),
        1 => Shape::Image {
            channels: r.u32("input channels")?,
            height: r.u32("input height")?,
            width: r.u32("input width")?,
        },
        tag => {
            return Err(Error::Parse {
                offset: shape_offset as u64,
                message: format!("unknown input shape tag {tag}"),
            })
        }
    };
    let layer_count = r.u32("layer count")?;
    let mut specs = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let tag_offset = r.offset;
        let what = format!("layer {i} spec");
        specs.push(match r.byte(&what)? {
            0 => LayerSpec::Dense {
                input: r.u32(&what)?,
                output: r.u32(&what)?,
            },
            1 => LayerSpec::Conv3x3 {
                in_channels: r.u32(&what)?,
                out_channels: r.u32(&what)?,
            },
            2 => LayerSpec::MaxPool2x2,
            3 => LayerSpec::BatchNorm {
                channels: r.u32(&what)?,
            },
            4 => LayerSpec::ReLU,
            5 => LayerSpec::Dropout { p: r.f64(&what)? },
            6 => LayerSpec::Flatten,
            tag => {
                return Err(Error::Parse {
                    offset: tag_offset as u64,
                    message: format!("unknown layer tag {tag} for layer {i}"),
                })
            }
        });
    }
    let seed = r.u64("seed")?;
    let mut params = Vec::with_capacity(layer_count);
    for (i, spec) in specs.iter().enumerate() {
        params.push(match *spec {
            LayerSpec::Dense { input, output } => {
                let w = r.tensor(input * output, &format!("layer {i} dense weights"))?;
                let b = r.tensor(output, &format!("layer {i} dense bias"))?;
                LayerParams::Dense {
                    w: Matrix::new(input, output, w)?,
                    b,
                }
            }
            LayerSpec::Conv3x3 {
                in_channels,
                out_channels,
            } => LayerParams::Conv {
                w: r.tensor(
                    out_channels * in_channels * 9,
                    &format!("layer {i} conv weights"),
                )?,
                b: r.tensor(out_channels, &format!("layer {i} conv bias"))?,
            },
            LayerSpec::BatchNorm { channels } => LayerParams::BatchNorm {
                scale: r.tensor(channels, &format!("layer {i} batchnorm scale"))?,
                shift: r.tensor(channels, &format!("layer {i} batchnorm shift"))?,
                running_mean: r.tensor(channels, &format!("layer {i} batchnorm running mean"))?,
                running_var: r.tensor(channels, &format!("layer {i} batchnorm running var"))?,
            },
            LayerSpec::MaxPool2x2
            | LayerSpec::ReLU
            | LayerSpec::Dropout { .. }
            | LayerSpec::Flatten => LayerParams::None,
        });
    }
    let head = match r.byte("head flag")? {
        0 => None,
        1 => {
            let rows = r.u32("head feature dim")?;
            let cols = r.u32("head class count")?;
            let w = r.tensor(rows * cols, "head weights")?;
            let b = r.tensor(cols, "head bias")?;
            Some(SoftmaxHead {
                w: Matrix::new(rows, cols, w)?,
                b,
            })
        }
        tag => {
            return Err(Error::Parse {
                offset: (r.offset - 1) as u64,
                message: format!("unknown head flag {tag}"),
            })
        }
    };
    if r.offset != bytes.len() {
        return Err(Error::Parse {
            offset: r.offset as u64,
            message: format!("{} trailing bytes after checkpoint", bytes.len() - r.offset),
        });
    }
    let net = Network::from_parts(input_shape, specs, params, seed)?;
    Ok(Model { net, head })
}
