//! Binary network checkpoints.
//!
//! Layout (all integers and floats little-endian, floats are IEEE-754 f64):
//!
//! ```text
//! magic     8 bytes   b"GOOFDNN\0"
//! version   u32       1
//! mode      u8        0 = train, 1 = infer
//! n_layers  u32
//! per layer:
//!   in_dim    u32
//!   out_dim   u32
//!   act_kind  u8      0 = linear, 1 = relu, 2 = leaky-relu
//!   act_slope f64     leaky slope, 0 otherwise
//!   has_bn    u8
//!   weight    out_dim*in_dim f64, row-major
//!   bias      out_dim f64
//!   if has_bn: momentum f64, epsilon f64,
//!              gamma, beta, running_mean, running_var (out_dim f64 each)
//! has_adam  u8
//! if has_adam:
//!   t u64, lr f64, beta1 f64, beta2 f64, epsilon f64,
//!   n_buffers u32, per buffer: len u64, m (len f64), v (len f64)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, AdamConfig, AdamState, BatchNorm, Dense, DenseNet, Mode};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GOOFDNN\0";
pub const VERSION: u32 = 1;

pub fn to_bytes(net: &DenseNet, adam: Option<&AdamState>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u8(match net.mode() {
        Mode::Train => 0,
        Mode::Infer => 1,
    });
    w.u32(net.layers().len() as u32);
    for layer in net.layers() {
        w.u32(layer.input_dim() as u32);
        w.u32(layer.output_dim() as u32);
        let (kind, slope) = match layer.activation {
            Activation::Linear => (0, 0.0),
            Activation::Relu => (1, 0.0),
            Activation::LeakyRelu(s) => (2, s),
        };
        w.u8(kind);
        w.f64(slope);
        w.u8(layer.batchnorm.is_some() as u8);
        w.floats(layer.weight.iter());
        w.floats(layer.bias.iter());
        if let Some(bn) = &layer.batchnorm {
            w.f64(bn.momentum);
            w.f64(bn.epsilon);
            w.floats(bn.gamma.iter());
            w.floats(bn.beta.iter());
            w.floats(bn.running_mean.iter());
            w.floats(bn.running_var.iter());
        }
    }
    match adam {
        None => w.u8(0),
        Some(state) => {
            w.u8(1);
            w.0.extend_from_slice(&state.t.to_le_bytes());
            w.f64(state.config.lr);
            w.f64(state.config.beta1);
            w.f64(state.config.beta2);
            w.f64(state.config.epsilon);
            w.u32(state.m.len() as u32);
            for (m, v) in state.m.iter().zip(&state.v) {
                w.0.extend_from_slice(&(m.len() as u64).to_le_bytes());
                w.floats(m.iter());
                w.floats(v.iter());
            }
        }
    }
    w.0
}

pub fn from_bytes(bytes: &[u8]) -> Result<(DenseNet, Option<AdamState>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let mode = match r.u8()? {
        0 => Mode::Train,
        1 => Mode::Infer,
        other => return Err(corrupt(&format!("bad mode {other}"))),
    };
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let input = r.u32()? as usize;
        let output = r.u32()? as usize;
        let kind = r.u8()?;
        let slope = r.f64()?;
        let activation = match kind {
            0 => Activation::Linear,
            1 => Activation::Relu,
            2 => Activation::LeakyRelu(slope),
            other => return Err(corrupt(&format!("bad activation {other}"))),
        };
        let has_bn = r.u8()? != 0;
        let weight = Array2::from_shape_vec((output, input), r.floats(output * input)?)
            .map_err(|e| corrupt(&e.to_string()))?;
        let bias = Array1::from(r.floats(output)?);
        let batchnorm = if has_bn {
            let momentum = r.f64()?;
            let epsilon = r.f64()?;
            Some(BatchNorm {
                gamma: Array1::from(r.floats(output)?),
                beta: Array1::from(r.floats(output)?),
                running_mean: Array1::from(r.floats(output)?),
                running_var: Array1::from(r.floats(output)?),
                momentum,
                epsilon,
            })
        } else {
            None
        };
        layers.push(Dense {
            weight,
            bias,
            activation,
            batchnorm,
        });
    }
    let mut net = DenseNet::from_layers(layers)?;
    net.set_mode(mode);

    let adam = if r.u8()? != 0 {
        let t = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let config = AdamConfig {
            lr: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            epsilon: r.f64()?,
        };
        let n = r.u32()? as usize;
        let (mut m, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
            m.push(r.floats(len)?);
            v.push(r.floats(len)?);
        }
        Some(AdamState { config, m, v, t })
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok((net, adam))
}

pub fn save(path: &Path, net: &DenseNet, adam: Option<&AdamState>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(net, adam))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(DenseNet, Option<AdamState>)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

fn corrupt(msg: &str) -> Error {
    Error::config(format!("corrupt checkpoint: {msg}"))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn floats<'a>(&mut self, it: impl Iterator<Item = &'a f64>) {
        for v in it {
            self.f64(*v);
        }
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
            .ok_or_else(|| corrupt("unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| corrupt("length overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
