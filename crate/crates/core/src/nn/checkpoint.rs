//! Versioned binary checkpoint for network parameters.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      8 bytes  "SAIRUNET"
//! version    u32
//! channels, bottleneck_channels, kernel   u32 x 3
//! n_tensors  u32
//! table      n_tensors x { name_len u16, name bytes, len u32 }
//! payload    concatenated f32 tensors in table order
//! ```

use std::path::Path;

use super::unet::{UNetConfig, UNetParams, LAYER_NAMES};
use crate::error::{Error, Result};
use crate::nifti::write_atomic;

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"SAIRUNET";
pub const CHECKPOINT_VERSION: u32 = 1;

fn tensor_names() -> Vec<String> {
    LAYER_NAMES
        .iter()
        .flat_map(|l| [format!("{l}.weight"), format!("{l}.bias")])
        .collect()
}

pub fn encode_checkpoint(p: &UNetParams<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [p.config.channels, p.config.bottleneck_channels, p.config.kernel] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let tensors = p.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensor_names().iter().zip(&tensors) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.len() as u32).to_le_bytes());
    }
    for t in &tensors {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<UNetParams<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config = UNetConfig {
        channels: r.u32()? as usize,
        bottleneck_channels: r.u32()? as usize,
        kernel: r.u32()? as usize,
    };
    if config.channels == 0 || config.bottleneck_channels == 0 || config.kernel.is_multiple_of(2) {
        return Err(Error::Checkpoint(format!("invalid network config {config:?}")));
    }
    let mut params = UNetParams::<f32>::zeros(config);
    let names = tensor_names();
    let n = r.u32()? as usize;
    if n != names.len() {
        return Err(Error::Checkpoint(format!("expected {} tensors, found {n}", names.len())));
    }
    let expected: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    for (name, &len) in names.iter().zip(&expected) {
        let name_len = r.u16()? as usize;
        let found = r.take(name_len)?;
        if found != name.as_bytes() {
            return Err(Error::Checkpoint(format!(
                "expected tensor {name}, found {}",
                String::from_utf8_lossy(found)
            )));
        }
        let stored = r.u32()? as usize;
        if stored != len {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has {stored} values, expected {len}"
            )));
        }
    }
    for t in params.tensors_mut() {
        let raw = r.take(t.len() * 4)?;
        for (v, b) in t.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(p: &UNetParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(p))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<UNetParams<f32>> {
    decode_checkpoint(&std::fs::read(path)?)
}
