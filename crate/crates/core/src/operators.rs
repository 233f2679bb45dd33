//! Acquisition-model and geometric operators on volumes: slice-profile blur,
//! decimation, cubic upsampling, in-plane rotation and additive noise.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Axis, Volume};

/// Normalized, symmetric 1D kernel modelling the scanner response across
/// slices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceProfile {
    taps: Vec<f64>,
}

impl SliceProfile {
    /// Builds a profile from raw weights, renormalizing them to unit sum.
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() || taps.len().is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "slice profile needs an odd number of taps, got {}",
                taps.len()
            )));
        }
        let sum: f64 = taps.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(Error::InvalidConfig("slice profile has no mass".into()));
        }
        let n = taps.len();
        for i in 0..n / 2 {
            if (taps[i] - taps[n - 1 - i]).abs() > 1e-12 * sum {
                return Err(Error::InvalidConfig("slice profile is not symmetric".into()));
            }
        }
        Ok(Self {
            taps: taps.iter().map(|t| t / sum).collect(),
        })
    }

    pub fn delta() -> Self {
        Self { taps: vec![1.0] }
    }

    /// Box of `width` samples (odd).
    pub fn boxcar(width: usize) -> Result<Self> {
        Self::new(vec![1.0; width])
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn half_width(&self) -> usize {
        self.taps.len() / 2
    }

    /// Discrete-time Fourier transform at `freq` cycles/sample. Real because
    /// the kernel is symmetric.
    pub fn frequency_response(&self, freq: f64) -> f64 {
        let c = self.half_width() as f64;
        self.taps
            .iter()
            .enumerate()
            .map(|(k, w)| w * (2.0 * std::f64::consts::PI * freq * (k as f64 - c)).cos())
            .sum()
    }
}

/// Gaussian slice profile whose full width at half maximum equals
/// `slice_thickness_ratio` samples, truncated at three standard deviations.
pub fn gaussian_profile(slice_thickness_ratio: f64) -> SliceProfile {
    let ratio = slice_thickness_ratio.max(f64::MIN_POSITIVE);
    let sigma = ratio / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let half = (3.0 * sigma).ceil() as i64;
    let taps = (-half..=half)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    SliceProfile::new(taps).expect("gaussian taps are odd, positive and symmetric")
}

/// Parameters of the acquisition model `D B X + N` along one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardModelConfig {
    pub r: usize,
    pub profile: SliceProfile,
    pub sigma: f64,
    pub seed: u64,
}

impl ForwardModelConfig {
    /// Gaussian profile with FWHM `r`.
    pub fn gaussian(r: usize, sigma: f64, seed: u64) -> Self {
        Self {
            r,
            profile: gaussian_profile(r as f64),
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // r = 1 is allowed: it is the degenerate identity acquisition
        if self.r < 1 {
            return Err(Error::InvalidConfig("decimation factor must be >= 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

fn axis_stride(dims: [usize; 3], axis: Axis) -> usize {
    match axis {
        Axis::X => dims[1] * dims[2],
        Axis::Y => dims[2],
        Axis::Z => 1,
    }
}

/// Applies `f(input_line, output_line)` to every line along `axis`, producing
/// a volume whose length along `axis` is `out_len`.
fn map_lines(
    v: &Volume,
    axis: Axis,
    out_len: usize,
    f: impl Fn(&[f64], &mut [f64]) + Sync,
) -> Volume {
    let dims = v.dims();
    let a = axis.index();
    let in_len = dims[a];
    let mut out_dims = dims;
    out_dims[a] = out_len;
    let in_stride = axis_stride(dims, axis);
    let out_stride = axis_stride(out_dims, axis);

    // enumerate line origins as (outer, inner) around the axis
    let (outer, inner) = match axis {
        Axis::X => (1, dims[1] * dims[2]),
        Axis::Y => (dims[0], dims[2]),
        Axis::Z => (dims[0] * dims[1], 1),
    };
    let src = v.data();
    let mut out = vec![0.0; out_dims.iter().product()];
    let mut line_in = vec![0.0; in_len];
    let mut line_out = vec![0.0; out_len];
    for o in 0..outer {
        for i in 0..inner {
            let base_in = o * in_len * inner + i;
            let base_out = o * out_len * inner + i;
            for (k, slot) in line_in.iter_mut().enumerate() {
                *slot = src[base_in + k * in_stride];
            }
            f(&line_in, &mut line_out);
            for (k, val) in line_out.iter().enumerate() {
                out[base_out + k * out_stride] = *val;
            }
        }
    }
    let mut spacing = v.spacing();
    spacing[a] *= in_len as f64 / out_len as f64;
    Volume::from_parts(out_dims, spacing, out)
}

/// Mirror index without edge repetition: `-1 -> 1`, `n -> n - 2`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

/// 1D convolution with `k` along `axis`, reflect boundary, dims unchanged.
pub fn blur_axis(v: &Volume, k: &SliceProfile, axis: Axis) -> Result<Volume> {
    let n = v.axis_len(axis);
    let taps = k.taps();
    if taps.len() >= 2 * n && taps.len() > 1 {
        return Err(Error::KernelTooLong {
            len: taps.len(),
            dim: n,
        });
    }
    let h = k.half_width() as isize;
    let out = map_lines(v, axis, n, |src, dst| {
        for (i, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, w) in taps.iter().enumerate() {
                acc += w * src[reflect(i as isize + j as isize - h, n)];
            }
            *d = acc;
        }
    });
    Ok(out)
}

/// Keeps samples `0, r, 2r, …` along `axis`; spacing along `axis` grows by `r`.
pub fn downsample_axis(v: &Volume, r: usize, axis: Axis) -> Result<Volume> {
    let n = v.axis_len(axis);
    if r == 0 || r > n {
        return Err(Error::FactorTooLarge { factor: r, dim: n });
    }
    if r == 1 {
        return Ok(v.clone());
    }
    let m = n / r;
    let mut out = map_lines(v, axis, m, |src, dst| {
        for (i, d) in dst.iter_mut().enumerate() {
            *d = src[i * r];
        }
    });
    // spacing grows by exactly r even when n is not a multiple of r
    let mut sp = v.spacing();
    sp[axis.index()] *= r as f64;
    out = out.with_spacing(sp)?;
    Ok(out)
}

/// Catmull-Rom (`a = -0.5`) weights for offsets `-1, 0, 1, 2` at fraction `t`.
#[inline]
pub(crate) fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Cubic upsampling by `r` along `axis`: coarse sample `i` lands on fine
/// index `i * r`, edges are clamped, output length is `n * r`.
pub fn upsample_axis_bicubic(v: &Volume, r: usize, axis: Axis) -> Result<Volume> {
    let n = v.axis_len(axis);
    if r == 0 {
        return Err(Error::InvalidConfig("upsampling factor must be >= 1".into()));
    }
    if r == 1 {
        return Ok(v.clone());
    }
    if n < 4 {
        return Err(Error::AxisTooShort { dim: n });
    }
    let weights: Vec<[f64; 4]> = (0..r)
        .map(|p| catmull_rom_weights(p as f64 / r as f64))
        .collect();
    let out = map_lines(v, axis, n * r, |src, dst| {
        for (j, d) in dst.iter_mut().enumerate() {
            let i0 = (j / r) as isize;
            let w = &weights[j % r];
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let idx = (i0 + k as isize - 1).clamp(0, n as isize - 1) as usize;
                acc += wk * src[idx];
            }
            *d = acc;
        }
    });
    let mut sp = v.spacing();
    sp[axis.index()] /= r as f64;
    out.with_spacing(sp)
}

fn snap_unit(v: f64) -> f64 {
    for target in [-1.0, 0.0, 1.0] {
        if (v - target).abs() < 1e-12 {
            return target;
        }
    }
    v
}

/// Source coordinate sampled by output pixel `(x, y)` for a rotation of
/// `theta` degrees about the in-plane centre of an `n x n` grid.
#[inline]
fn rotation_source(n: usize, cos: f64, sin: f64, x: usize, y: usize) -> (f64, f64) {
    let c = (n as f64 - 1.0) / 2.0;
    let dx = x as f64 - c;
    let dy = y as f64 - c;
    (c + cos * dx + sin * dy, c - sin * dx + cos * dy)
}

fn rotation_trig(theta: f64) -> (f64, f64) {
    let (s, c) = theta.to_radians().sin_cos();
    (snap_unit(c), snap_unit(s))
}

const ROTATION_EDGE_EPS: f64 = 1e-9;

/// In-plane validity of a rotation: `true` where the output samples inside
/// the source grid. Laid out as `x * n + y`.
pub fn rotation_valid_mask(n: usize, theta: f64) -> Vec<bool> {
    let (cos, sin) = rotation_trig(theta);
    let hi = n as f64 - 1.0 + ROTATION_EDGE_EPS;
    let mut out = Vec::with_capacity(n * n);
    for x in 0..n {
        for y in 0..n {
            let (sx, sy) = rotation_source(n, cos, sin, x, y);
            out.push(sx >= -ROTATION_EDGE_EPS && sx <= hi && sy >= -ROTATION_EDGE_EPS && sy <= hi);
        }
    }
    out
}

/// Rotates every axial plane by `theta` degrees about the `(x, y)` centre
/// with bicubic resampling; samples falling outside the grid are zero.
pub fn rotate_z(v: &Volume, theta: f64) -> Result<Volume> {
    let [nx, ny, nz] = v.dims();
    if nx != ny {
        return Err(Error::NonSquare { nx, ny });
    }
    let n = nx;
    if theta == 0.0 {
        return Ok(v.clone());
    }
    let (cos, sin) = rotation_trig(theta);
    let hi = n as f64 - 1.0 + ROTATION_EDGE_EPS;
    let src = v.data();
    let mut out = vec![0.0; src.len()];
    out.par_chunks_mut(ny * nz).enumerate().for_each(|(x, plane)| {
        for y in 0..ny {
            let (sx, sy) = rotation_source(n, cos, sin, x, y);
            if !(sx >= -ROTATION_EDGE_EPS && sx <= hi && sy >= -ROTATION_EDGE_EPS && sy <= hi) {
                continue;
            }
            let fx = sx.floor();
            let fy = sy.floor();
            let wx = catmull_rom_weights(sx - fx);
            let wy = catmull_rom_weights(sy - fy);
            let dst = &mut plane[y * nz..(y + 1) * nz];
            for (i, wxi) in wx.iter().enumerate() {
                if *wxi == 0.0 {
                    continue;
                }
                let ix = (fx as isize + i as isize - 1).clamp(0, n as isize - 1) as usize;
                for (j, wyj) in wy.iter().enumerate() {
                    let w = wxi * wyj;
                    if w == 0.0 {
                        continue;
                    }
                    let iy = (fy as isize + j as isize - 1).clamp(0, n as isize - 1) as usize;
                    let line = &src[(ix * ny + iy) * nz..(ix * ny + iy + 1) * nz];
                    for (d, s) in dst.iter_mut().zip(line) {
                        *d += w * s;
                    }
                }
            }
        }
    });
    Ok(Volume::from_parts(v.dims(), v.spacing(), out))
}

const NOISE_CHUNK: usize = 1 << 14;

/// Standard normal deviates for linear indices `start..start + out.len()`,
/// each keyed on `(seed, index)` so any chunking yields the same stream.
fn normal_block(seed: u64, start: usize, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // two u64 draws (four 32-bit words) per voxel
    rng.set_word_pos(start as u128 * 4);
    for o in out.iter_mut() {
        let a = rng.next_u64();
        let b = rng.next_u64();
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        *o = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    }
}

/// Adds i.i.d. `N(0, sigma²)` noise, reproducible per `(seed, dims)`.
pub fn add_gaussian_noise(v: &Volume, sigma: f64, seed: u64) -> Result<Volume> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidConfig(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(v.clone());
    }
    let mut noise = vec![0.0; v.len()];
    noise
        .par_chunks_mut(NOISE_CHUNK)
        .enumerate()
        .for_each(|(i, chunk)| normal_block(seed, i * NOISE_CHUNK, chunk));
    let data = v
        .data()
        .iter()
        .zip(&noise)
        .map(|(x, n)| x + sigma * n)
        .collect();
    Ok(Volume::from_parts(v.dims(), v.spacing(), data))
}

/// `downsample(blur(x)) + noise` along `axis`.
pub fn apply_forward_model(x: &Volume, cfg: &ForwardModelConfig, axis: Axis) -> Result<Volume> {
    cfg.validate()?;
    let blurred = blur_axis(x, &cfg.profile, axis)?;
    let decimated = downsample_axis(&blurred, cfg.r, axis)?;
    add_gaussian_noise(&decimated, cfg.sigma, cfg.seed)
}
