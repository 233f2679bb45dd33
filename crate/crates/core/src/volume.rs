//! Dense 3D scalar volumes, boolean masks and intensity normalization.
//!
//! Storage is row-major with axis order `(x, y, z)`: the linear index of
//! voxel `(x, y, z)` is `(x * ny + y) * nz + z`, so `z` (the thick-slice
//! axis) is contiguous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// One of the three volume axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// A 3D scalar field with voxel spacing in millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    data: Vec<f64>,
    dims: [usize; 3],
    spacing: [f64; 3],
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!("zero-sized dims {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidVolume(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match dims {dims:?}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("volume data"));
        }
        Ok(Self {
            data,
            dims,
            spacing,
        })
    }

    /// Builds a volume without re-validating; callers guarantee the invariants.
    pub(crate) fn from_parts(dims: [usize; 3], spacing: [f64; 3], data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims[0] * dims[1] * dims[2]);
        Self {
            data,
            dims,
            spacing,
        }
    }

    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: f64) -> Result<Self> {
        Self::new(dims, spacing, vec![value; dims.iter().product()])
    }

    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, data)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)]
    }

    pub fn axis_len(&self, axis: Axis) -> usize {
        self.dims[axis.index()]
    }

    /// Slice thickness over in-plane voxel size, `Δz / Δx`.
    pub fn resolution_ratio(&self) -> f64 {
        self.spacing[2] / self.spacing[0]
    }

    /// Integer decimation factor implied by the spacing.
    pub fn inferred_factor(&self) -> usize {
        self.resolution_ratio().round().max(1.0) as usize
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Result<Self> {
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidVolume(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        self.spacing = spacing;
        Ok(self)
    }

    /// Applies `f` voxel-wise.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.dims, self.spacing, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Voxel-wise combination of two volumes of equal dims.
    pub fn zip_map(&self, other: &Volume, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.dims, self.spacing, data)
    }

    /// Exchanges two axes (and their spacings).
    pub fn swap_axes(&self, a: Axis, b: Axis) -> Self {
        let (ia, ib) = (a.index(), b.index());
        let mut dims = self.dims;
        let mut spacing = self.spacing;
        dims.swap(ia, ib);
        spacing.swap(ia, ib);
        let mut out = vec![0.0; self.data.len()];
        for x in 0..self.dims[0] {
            for y in 0..self.dims[1] {
                for z in 0..self.dims[2] {
                    let mut c = [x, y, z];
                    c.swap(ia, ib);
                    out[(c[0] * dims[1] + c[1]) * dims[2] + c[2]] = self.get(x, y, z);
                }
            }
        }
        Self::from_parts(dims, spacing, out)
    }

    /// Keeps the sub-block `[0, dims)` anchored at the origin.
    pub fn crop(&self, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().zip(&self.dims).any(|(&d, &s)| d == 0 || d > s) {
            return Err(Error::DimMismatch(format!(
                "cannot crop {:?} to {dims:?}",
                self.dims
            )));
        }
        let mut out = Vec::with_capacity(dims.iter().product());
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                let start = self.index(x, y, 0);
                out.extend_from_slice(&self.data[start..start + dims[2]]);
            }
        }
        Ok(Self::from_parts(dims, self.spacing, out))
    }

    /// Zero-pads the in-plane dims to a common square, centred. Returns the
    /// padded volume and the `(x, y)` offset of the original block.
    pub fn pad_square(&self) -> (Self, [usize; 2]) {
        let [nx, ny, nz] = self.dims;
        let n = nx.max(ny);
        if nx == ny {
            return (self.clone(), [0, 0]);
        }
        let off = [(n - nx) / 2, (n - ny) / 2];
        let mut out = vec![0.0; n * n * nz];
        for x in 0..nx {
            for y in 0..ny {
                let src = self.index(x, y, 0);
                let dst = ((x + off[0]) * n + y + off[1]) * nz;
                out[dst..dst + nz].copy_from_slice(&self.data[src..src + nz]);
            }
        }
        (Self::from_parts([n, n, nz], self.spacing, out), off)
    }

    /// Inverse of [`Volume::pad_square`].
    pub fn unpad_square(&self, dims: [usize; 3], off: [usize; 2]) -> Self {
        let nz = self.dims[2];
        let mut out = Vec::with_capacity(dims.iter().product());
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                let src = self.index(x + off[0], y + off[1], 0);
                out.extend_from_slice(&self.data[src..src + nz]);
            }
        }
        Self::from_parts(dims, self.spacing, out)
    }

    /// Fixed-z plane with axes ordered `(x, y)`.
    pub fn axial_slice(&self, z: usize) -> Image {
        let [nx, ny, _] = self.dims;
        let mut data = Vec::with_capacity(nx * ny);
        for x in 0..nx {
            for y in 0..ny {
                data.push(self.get(x, y, z));
            }
        }
        Image::from_parts(nx, ny, data)
    }

    /// Fixed-y plane with axes ordered `(z, x)`.
    pub fn coronal_slice(&self, y: usize) -> Image {
        let [nx, _, nz] = self.dims;
        let mut data = Vec::with_capacity(nx * nz);
        for z in 0..nz {
            for x in 0..nx {
                data.push(self.get(x, y, z));
            }
        }
        Image::from_parts(nz, nx, data)
    }

    /// Reassembles a volume from fixed-y planes laid out as by
    /// [`Volume::coronal_slice`].
    pub fn from_coronal_slices(planes: &[Image], spacing: [f64; 3]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidVolume("no planes".into()))?;
        let (nz, nx) = (first.rows(), first.cols());
        let ny = planes.len();
        let mut data = vec![0.0; nx * ny * nz];
        for (y, p) in planes.iter().enumerate() {
            if p.rows() != nz || p.cols() != nx {
                return Err(Error::ShapeMismatch("coronal planes differ in shape".into()));
            }
            for z in 0..nz {
                for x in 0..nx {
                    data[(x * ny + y) * nz + z] = p.get(z, x);
                }
            }
        }
        Self::new([nx, ny, nz], spacing, data)
    }
}

/// Dense boolean mask paired with a volume of equal dims.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    data: Vec<bool>,
    dims: [usize; 3],
}

impl Mask {
    pub fn new(dims: [usize; 3], data: Vec<bool>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::InvalidVolume(format!(
                "mask length {} does not match dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self { data, dims })
    }

    pub fn full(dims: [usize; 3]) -> Self {
        Self {
            data: vec![true; dims.iter().product()],
            dims,
        }
    }

    /// Voxels strictly above `threshold`.
    pub fn from_volume(v: &Volume, threshold: f64) -> Self {
        Self {
            data: v.data().iter().map(|&x| x > threshold).collect(),
            dims: v.dims(),
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[(x * self.dims[1] + y) * self.dims[2] + z]
    }

    pub fn crop(&self, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().zip(&self.dims).any(|(&d, &s)| d == 0 || d > s) {
            return Err(Error::DimMismatch(format!(
                "cannot crop mask {:?} to {dims:?}",
                self.dims
            )));
        }
        let mut out = Vec::with_capacity(dims.iter().product());
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                let start = (x * self.dims[1] + y) * self.dims[2];
                out.extend_from_slice(&self.data[start..start + dims[2]]);
            }
        }
        Ok(Self { data: out, dims })
    }

    /// As a 0/1 volume with unit spacing.
    pub fn to_volume(&self) -> Volume {
        Volume::from_parts(
            self.dims,
            [1.0; 3],
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }
}

/// Affine intensity map recorded by [`normalize_intensities`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityScale {
    /// Intensity sent to 0 (0.5th percentile).
    pub low: f64,
    /// Intensity sent to 1 (99.5th percentile).
    pub high: f64,
}

impl IntensityScale {
    pub fn forward(&self, v: f64) -> f64 {
        (v - self.low) / (self.high - self.low)
    }

    pub fn inverse(&self, u: f64) -> f64 {
        u * (self.high - self.low) + self.low
    }

    /// Maps a volume back to its original intensity range.
    pub fn invert(&self, v: &Volume) -> Result<Volume> {
        v.map(|u| self.inverse(u))
    }
}

pub const NORMALIZE_LOW_PERCENTILE: f64 = 0.5;
pub const NORMALIZE_HIGH_PERCENTILE: f64 = 99.5;

/// Linear-interpolated percentile (`q` in `[0, 100]`) of already sorted data.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (q / 100.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

/// Computes the 0.5/99.5 percentile scale of a volume without applying it.
pub fn intensity_scale(v: &Volume) -> Result<IntensityScale> {
    let mut sorted = v.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.first() == sorted.last() {
        return Err(Error::ConstantVolume);
    }
    let low = percentile_sorted(&sorted, NORMALIZE_LOW_PERCENTILE);
    let mut high = percentile_sorted(&sorted, NORMALIZE_HIGH_PERCENTILE);
    if high <= low {
        // Heavy ties at the percentiles: fall back to the full range.
        high = sorted[sorted.len() - 1];
        if high <= low {
            return Err(Error::ConstantVolume);
        }
    }
    Ok(IntensityScale { low, high })
}

/// Maps the 0.5th percentile to 0 and the 99.5th to 1, then clamps to `[0, 1]`.
pub fn normalize_intensities(v: &Volume) -> Result<(Volume, IntensityScale)> {
    let scale = intensity_scale(v)?;
    let out = v.map(|x| scale.forward(x).clamp(0.0, 1.0))?;
    Ok((out, scale))
}
