//! Single-file NIfTI-1 (`.nii`) reader and writer.
//!
//! Only the subset needed here is supported: little-endian, three spatial
//! dimensions, `float32` or `int16` voxels, spacing from `pixdim[1..=3]`.
//! Orientation matrices are neither read nor written.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::Volume;

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
pub const MAGIC: [u8; 4] = *b"n+1\0";

pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_DESCRIP: usize = 148;
const OFF_MAGIC: usize = 344;

const UNITS_MM: u8 = 2;

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn i32_at(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

/// Widens a header `f32` through its shortest decimal form, so a spacing of
/// `1.1` written as `f32` reads back as the `f64` literal `1.1`.
fn widen_decimal(v: f32) -> f64 {
    format!("{v}").parse().unwrap_or(v as f64)
}

/// Decodes an in-memory `.nii` file.
pub fn decode_nifti(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::TruncatedPayload {
            expected: HEADER_SIZE,
            found: bytes.len(),
        });
    }
    if i32_at(bytes, 0) != HEADER_SIZE as i32 || bytes[OFF_MAGIC..OFF_MAGIC + 4] != MAGIC {
        return Err(Error::BadMagic);
    }

    let ndim = i16_at(bytes, OFF_DIM);
    let dim: Vec<i16> = (0..8).map(|i| i16_at(bytes, OFF_DIM + 2 * i)).collect();
    let spatial_ok = (1..=3).all(|i| dim[i] >= 1);
    let extra_ok = (4..=(ndim.clamp(3, 7) as usize)).all(|i| dim[i] == 1);
    if !(3..=7).contains(&ndim) || !spatial_ok || !extra_ok {
        return Err(Error::UnsupportedDimCount(ndim));
    }
    let dims = [dim[1] as usize, dim[2] as usize, dim[3] as usize];

    let datatype = i16_at(bytes, OFF_DATATYPE);
    let elem = match datatype {
        DT_FLOAT32 => 4,
        DT_INT16 => 2,
        other => return Err(Error::UnsupportedDatatype(other)),
    };

    let spacing = [1, 2, 3].map(|i| widen_decimal(f32_at(bytes, OFF_PIXDIM + 4 * i)).abs());

    let vox_offset = f32_at(bytes, OFF_VOX_OFFSET);
    let start = if vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32 {
        vox_offset as usize
    } else {
        VOX_OFFSET
    };
    let n = dims[0] * dims[1] * dims[2];
    let expected = start + n * elem;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }

    let slope = f32_at(bytes, OFF_SCL_SLOPE);
    let inter = f32_at(bytes, OFF_SCL_INTER);
    let scaling = (slope != 0.0 && slope.is_finite())
        .then(|| (slope as f64, if inter.is_finite() { inter as f64 } else { 0.0 }));

    let payload = &bytes[start..expected];
    let raw = |i: usize| -> f64 {
        match datatype {
            DT_FLOAT32 => f32_at(payload, 4 * i) as f64,
            _ => i16_at(payload, 2 * i) as f64,
        }
    };

    // file order is x fastest; ours is z fastest
    let [nx, ny, nz] = dims;
    let mut data = vec![0.0; n];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let v = raw(x + nx * (y + ny * z));
                data[(x * ny + y) * nz + z] = match scaling {
                    Some((s, b)) => v * s + b,
                    None => v,
                };
            }
        }
    }
    Volume::new(dims, spacing, data)
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume> {
    let bytes = std::fs::read(path)?;
    decode_nifti(&bytes)
}

/// Encodes a volume as a `float32` single-file NIfTI-1 image.
pub fn encode_nifti(v: &Volume) -> Result<Vec<u8>> {
    let dims = v.dims();
    if dims.iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::InvalidVolume(format!(
            "dims {dims:?} exceed the NIfTI-1 limit"
        )));
    }
    let mut h = vec![0u8; VOX_OFFSET];
    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    h[38] = b'r';
    let dim: [i16; 8] = [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        h[OFF_DIM + 2 * i..OFF_DIM + 2 * i + 2].copy_from_slice(&d.to_le_bytes());
    }
    h[OFF_DATATYPE..OFF_DATATYPE + 2].copy_from_slice(&DT_FLOAT32.to_le_bytes());
    h[OFF_BITPIX..OFF_BITPIX + 2].copy_from_slice(&32i16.to_le_bytes());
    let sp = v.spacing();
    let pixdim: [f32; 8] = [1.0, sp[0] as f32, sp[1] as f32, sp[2] as f32, 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        h[OFF_PIXDIM + 4 * i..OFF_PIXDIM + 4 * i + 4].copy_from_slice(&p.to_le_bytes());
    }
    h[OFF_VOX_OFFSET..OFF_VOX_OFFSET + 4].copy_from_slice(&(VOX_OFFSET as f32).to_le_bytes());
    h[OFF_SCL_SLOPE..OFF_SCL_SLOPE + 4].copy_from_slice(&0f32.to_le_bytes());
    h[OFF_SCL_INTER..OFF_SCL_INTER + 4].copy_from_slice(&0f32.to_le_bytes());
    h[OFF_XYZT_UNITS] = UNITS_MM;
    let descrip = b"sair";
    h[OFF_DESCRIP..OFF_DESCRIP + descrip.len()].copy_from_slice(descrip);
    h[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(&MAGIC);

    let [nx, ny, nz] = dims;
    h.reserve(v.len() * 4);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                h.extend_from_slice(&(v.get(x, y, z) as f32).to_le_bytes());
            }
        }
    }
    Ok(h)
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so a failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_nifti(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_nifti(v)?;
    write_atomic(path.as_ref(), &bytes)
}
