//! `PCN1` binary model container and its JSON architecture descriptor.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes  "PCN1"
//! version  u32      1
//! loss     u32      0 = mse, 1 = cross_entropy
//! layers   u32      number of layers (hidden + output)
//! per layer:
//!   in     u32
//!   out    u32
//!   act    u32      activation code
//!   weight out*in f64, row-major
//!   bias   out f64
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, Layer, Loss, Network};
use crate::error::{PcError, Result};
use crate::numeric::{Matrix, Vector};

pub const MAGIC: [u8; 4] = *b"PCN1";
pub const VERSION: u32 = 1;

/// Architecture summary written next to a `PCN1` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDescriptor {
    pub format: String,
    pub version: u32,
    pub loss: Loss,
    pub input_dim: usize,
    pub layers: Vec<LayerDescriptor>,
    pub num_params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

pub fn descriptor(net: &Network) -> NetworkDescriptor {
    NetworkDescriptor {
        format: "PCN1".into(),
        version: VERSION,
        loss: net.loss(),
        input_dim: net.input_dim(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerDescriptor {
                in_dim: l.in_dim(),
                out_dim: l.out_dim(),
                activation: l.activation,
            })
            .collect(),
        num_params: net.num_params(),
    }
}

pub fn to_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * net.num_params() + 12 * net.layers().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.loss().code() as u32).to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for l in net.layers() {
        out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(l.activation.code() as u32).to_le_bytes());
        for v in l.weight.data().iter().chain(l.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < self.pos + n {
            return Err(PcError::Truncated {
                path: self.path.to_path_buf(),
                needed: self.pos + n,
                found: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn parse_err(&self, offset: usize, msg: impl Into<String>) -> PcError {
        PcError::Parse {
            path: self.path.to_path_buf(),
            offset,
            msg: msg.into(),
        }
    }
}

/// Decodes a `PCN1` buffer. `path` is only used in error messages.
pub fn from_bytes(buf: &[u8], path: &Path) -> Result<Network> {
    let mut r = Reader { path, buf, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(PcError::BadMagic {
            path: path.to_path_buf(),
            offset: 0,
            expected: u32::from_be_bytes(MAGIC),
            found: u32::from_be_bytes(magic.try_into().unwrap()),
        });
    }
    let at = r.pos;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.parse_err(at, format!("unsupported version {version}")));
    }
    let at = r.pos;
    let loss_code = r.u32()?;
    let loss = u8::try_from(loss_code)
        .ok()
        .and_then(Loss::from_code)
        .ok_or_else(|| r.parse_err(at, format!("unknown loss code {loss_code}")))?;
    let n = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let at = r.pos;
        let code = r.u32()?;
        let act = u8::try_from(code)
            .ok()
            .and_then(Activation::from_code)
            .ok_or_else(|| r.parse_err(at, format!("unknown activation code {code}")))?;
        let weight = Matrix::from_vec(out_dim, in_dim, r.f64s(out_dim * in_dim)?)?;
        let bias = Vector(r.f64s(out_dim)?);
        layers.push(Layer::new(weight, bias, act)?);
    }
    if r.pos != buf.len() {
        return Err(r.parse_err(r.pos, "trailing bytes after last layer"));
    }
    Network::new(layers, loss)
}

/// Writes `<path>` (binary) and `<path>.json` (descriptor).
pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(net)).map_err(|e| PcError::io(path, e))?;
    let json_path = descriptor_path(path);
    let json = serde_json::to_string_pretty(&descriptor(net))?;
    fs::write(&json_path, json).map_err(|e| PcError::io(json_path, e))?;
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| PcError::io(path, e))?;
    from_bytes(&buf, path)
}

pub fn descriptor_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
