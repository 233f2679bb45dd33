//! Fourier burst accumulation: per-frequency fusion of an ensemble of
//! predictions, each weighted by its share of the spectral power.
//!
//! With `p = 2` the weight of member `m` at frequency `ω` is
//! `|X̂_m(ω)|² / Σ_k |X̂_k(ω)|²`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume;

/// Denominators below this fall back to uniform weights.
pub const WEIGHT_FLOOR: f64 = 1e-30;

/// Maximum imaginary residue of the fused volume, relative to the data range.
pub const IMAG_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_pred: usize,
    pub p_exponent: u32,
    /// Gaussian smoothing (std dev in frequency samples) of the spectral
    /// power before weighting. Off unless set.
    pub power_smoothing: Option<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_pred: 15,
            p_exponent: 2,
            power_smoothing: None,
        }
    }
}

impl EnsembleConfig {
    pub fn with_members(n_pred: usize) -> Self {
        Self {
            n_pred,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pred == 0 {
            return Err(Error::InvalidConfig("n_pred must be >= 1".into()));
        }
        if self.p_exponent != 2 {
            return Err(Error::InvalidConfig(format!(
                "only p = 2 is supported, got {}",
                self.p_exponent
            )));
        }
        if let Some(s) = self.power_smoothing {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidConfig("power smoothing must be positive".into()));
            }
        }
        Ok(())
    }

    /// Prediction angles, evenly spaced over `[0°, 180°)`.
    pub fn angles(&self) -> Vec<f64> {
        crate::dataset::training_angles(self.n_pred)
    }
}

/// Complex 3D array in the volume's `(x, y, z)` row-major layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub dims: [usize; 3],
    pub data: Vec<Complex64>,
}

pub type SpectrumStack = Vec<Spectrum>;

fn fft_axis(data: &mut [Complex64], dims: [usize; 3], axis: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let n = dims[axis];
    if n == 1 {
        return;
    }
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    if axis == 2 {
        // contiguous lines
        fft.process(data);
        return;
    }
    let stride = if axis == 1 { dims[2] } else { dims[1] * dims[2] };
    let (outer, inner) = if axis == 1 {
        (dims[0], dims[2])
    } else {
        (1, dims[1] * dims[2])
    };
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            for (k, l) in line.iter_mut().enumerate() {
                *l = data[base + k * stride];
            }
            fft.process(&mut line);
            for (k, l) in line.iter().enumerate() {
                data[base + k * stride] = *l;
            }
        }
    }
}

/// Unnormalized forward 3D DFT.
pub fn fft3(v: &Volume) -> Spectrum {
    let dims = v.dims();
    let mut data: Vec<Complex64> = v.data().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    for axis in [2, 1, 0] {
        fft_axis(&mut data, dims, axis, false);
    }
    Spectrum { dims, data }
}

/// Inverse 3D DFT scaled by `1 / N`, returned as complex values.
pub fn ifft3_complex(s: &Spectrum) -> Vec<Complex64> {
    let mut data = s.data.clone();
    for axis in [2, 1, 0] {
        fft_axis(&mut data, s.dims, axis, true);
    }
    let scale = 1.0 / data.len() as f64;
    for c in data.iter_mut() {
        *c *= scale;
    }
    data
}

/// Inverse 3D DFT keeping the real part.
pub fn ifft3(s: &Spectrum, spacing: [f64; 3]) -> Result<Volume> {
    let data = ifft3_complex(s).into_iter().map(|c| c.re).collect();
    Volume::new(s.dims, spacing, data)
}

/// Circular separable Gaussian smoothing of a real 3D field.
fn smooth_circular(field: &mut [f64], dims: [usize; 3], sigma: f64) {
    let half = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-half..=half)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / sum).collect();
    let strides = [dims[1] * dims[2], dims[2], 1];
    for axis in 0..3 {
        let n = dims[axis] as isize;
        let src = field.to_vec();
        for (idx, out) in field.iter_mut().enumerate() {
            let pos = (idx / strides[axis]) % dims[axis];
            let base = idx - pos * strides[axis];
            let mut acc = 0.0;
            for (t, w) in taps.iter().enumerate() {
                let j = (pos as isize + t as isize - half).rem_euclid(n) as usize;
                acc += w * src[base + j * strides[axis]];
            }
            *out = acc;
        }
    }
}

fn powers(stack: &[Spectrum], smoothing: Option<f64>) -> Vec<Vec<f64>> {
    stack
        .iter()
        .map(|s| {
            let mut p: Vec<f64> = s.data.iter().map(|c| c.norm_sqr()).collect();
            if let Some(sigma) = smoothing {
                smooth_circular(&mut p, s.dims, sigma);
            }
            p
        })
        .collect()
}

fn check_stack(stack: &[Spectrum]) -> Result<[usize; 3]> {
    let first = stack
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty spectrum stack".into()))?;
    if stack.iter().any(|s| s.dims != first.dims) {
        return Err(Error::DimMismatch("spectra differ in dims".into()));
    }
    Ok(first.dims)
}

/// Per-frequency fusion weights of every member; they sum to one at each
/// frequency.
pub fn fba_weights(stack: &[Spectrum]) -> Result<Vec<Vec<f64>>> {
    weights_with(stack, None)
}

fn weights_with(stack: &[Spectrum], smoothing: Option<f64>) -> Result<Vec<Vec<f64>>> {
    check_stack(stack)?;
    let pw = powers(stack, smoothing);
    let n = stack.len();
    let len = stack[0].data.len();
    let uniform = 1.0 / n as f64;
    let mut weights = vec![vec![0.0; len]; n];
    for f in 0..len {
        let denom: f64 = pw.iter().map(|p| p[f]).sum();
        for m in 0..n {
            weights[m][f] = if denom < WEIGHT_FLOOR {
                uniform
            } else {
                pw[m][f] / denom
            };
        }
    }
    Ok(weights)
}

/// Fuses predictions of equal dims into one volume.
pub fn fba_fuse(preds: &[Volume], cfg: &EnsembleConfig) -> Result<Volume> {
    cfg.validate()?;
    let first = preds
        .first()
        .ok_or_else(|| Error::InvalidConfig("no predictions to fuse".into()))?;
    if preds.iter().any(|p| p.dims() != first.dims()) {
        return Err(Error::DimMismatch("predictions differ in dims".into()));
    }
    if preds.len() == 1 {
        return Ok(first.clone());
    }
    let stack: SpectrumStack = preds.iter().map(fft3).collect();
    let weights = weights_with(&stack, cfg.power_smoothing)?;
    let mut acc = vec![Complex64::new(0.0, 0.0); stack[0].data.len()];
    // fold over members in index order
    for (s, w) in stack.iter().zip(&weights) {
        for ((a, x), wf) in acc.iter_mut().zip(&s.data).zip(w) {
            *a += x * wf;
        }
    }
    let fused = ifft3_complex(&Spectrum {
        dims: first.dims(),
        data: acc,
    });

    let (lo, hi) = preds
        .iter()
        .flat_map(|p| p.data().iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let residue = fused.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    if residue > IMAG_TOLERANCE * range {
        return Err(Error::ImaginaryResidue { residue, range });
    }
    Volume::new(first.dims(), first.spacing(), fused.into_iter().map(|c| c.re).collect())
        .map_err(|_| Error::NonFinite("fused volume"))
}
