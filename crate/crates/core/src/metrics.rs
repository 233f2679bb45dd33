//! Masked reconstruction metrics: MSE in decibels and mean SSIM.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Mask, Volume};

/// Reported for identical inputs instead of `-inf`.
pub const MSE_DB_FLOOR: f64 = -300.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mse_db: f64,
    pub ssim: f64,
    pub voxels_evaluated: usize,
}

/// SSIM window and stabilizing constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub sigma: f64,
    pub radius: usize,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    /// 11x11 Gaussian window with σ = 1.5, `K1 = 0.01`, `K2 = 0.03`, `L = 1`.
    fn default() -> Self {
        Self {
            sigma: 1.5,
            radius: 5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    fn taps(&self) -> Vec<f64> {
        let r = self.radius as isize;
        (-r..=r)
            .map(|k| (-(k * k) as f64 / (2.0 * self.sigma * self.sigma)).exp())
            .collect()
    }
}

fn check(a: &Volume, b: &Volume, m: &Mask) -> Result<usize> {
    if a.dims() != b.dims() || a.dims() != m.dims() {
        return Err(Error::DimMismatch(format!(
            "{:?}, {:?} and mask {:?}",
            a.dims(),
            b.dims(),
            m.dims()
        )));
    }
    let count = m.count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(count)
}

/// `10 log10(mean((a - b)²))` over the mask, floored at [`MSE_DB_FLOOR`].
pub fn mse_db(a: &Volume, b: &Volume, m: &Mask) -> Result<f64> {
    let count = check(a, b, m)?;
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .zip(m.data())
        .filter(|(_, &keep)| keep)
        .map(|((x, y), _)| (x - y) * (x - y))
        .sum();
    let mse = sse / count as f64;
    if mse <= 0.0 {
        return Ok(MSE_DB_FLOOR);
    }
    Ok((10.0 * mse.log10()).max(MSE_DB_FLOOR))
}

/// Separable Gaussian filtering of an `rows x cols` plane; the window is
/// truncated at the border and renormalized over the pixels it covers.
fn filter_plane(src: &[f64], rows: usize, cols: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let pass = |src: &[f64], along_rows: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for i in 0..rows {
            for j in 0..cols {
                let (pos, len) = if along_rows { (i, rows) } else { (j, cols) };
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (t, w) in taps.iter().enumerate() {
                    let q = pos as isize + t as isize - r;
                    if q < 0 || q >= len as isize {
                        continue;
                    }
                    let q = q as usize;
                    let v = if along_rows { src[q * cols + j] } else { src[i * cols + q] };
                    acc += w * v;
                    norm += w;
                }
                out[i * cols + j] = acc / norm;
            }
        }
        out
    };
    pass(&pass(src, false), true)
}

/// SSIM map of two `rows x cols` planes.
pub fn ssim_map_2d(a: &[f64], b: &[f64], rows: usize, cols: usize, params: &SsimParams) -> Vec<f64> {
    let taps = params.taps();
    let (c1, c2) = (params.c1(), params.c2());
    let f = |x: &[f64]| filter_plane(x, rows, cols, &taps);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let (mu_a, mu_b) = (f(a), f(b));
    let (e_aa, e_bb, e_ab) = (f(&aa), f(&bb), f(&ab));
    (0..rows * cols)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect()
}

/// Mean over masked voxels of the slice-wise (fixed `z`) SSIM map.
pub fn ssim_masked_with(a: &Volume, b: &Volume, m: &Mask, params: &SsimParams) -> Result<f64> {
    let count = check(a, b, m)?;
    let [nx, ny, nz] = a.dims();
    let per_slice: Vec<f64> = (0..nz)
        .into_par_iter()
        .map(|z| {
            if !(0..nx * ny).any(|p| m.get(p / ny, p % ny, z)) {
                return 0.0;
            }
            let pa = a.axial_slice(z);
            let pb = b.axial_slice(z);
            let map = ssim_map_2d(pa.data(), pb.data(), nx, ny, params);
            map.iter()
                .enumerate()
                .filter(|(p, _)| m.get(p / ny, p % ny, z))
                .map(|(_, v)| v)
                .sum()
        })
        .collect();
    let ssim = per_slice.iter().sum::<f64>() / count as f64;
    Ok(ssim.clamp(-1.0, 1.0))
}

pub fn ssim_masked(a: &Volume, b: &Volume, m: &Mask) -> Result<f64> {
    ssim_masked_with(a, b, m, &SsimParams::default())
}

pub fn evaluate(reference: &Volume, test: &Volume, m: &Mask) -> Result<EvalResult> {
    Ok(EvalResult {
        mse_db: mse_db(reference, test, m)?,
        ssim: ssim_masked(reference, test, m)?,
        voxels_evaluated: m.count(),
    })
}
