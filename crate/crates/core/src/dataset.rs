//! Self-supervised training pairs synthesized from the upsampled volume.
//!
//! For every training angle the upsampled volume is rotated about `z`,
//! degraded along `x` with the acquisition model, re-upsampled along `x`,
//! and cut into axial slices. The clean rotated slice is the target.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nifti::write_nifti;
use crate::operators::{
    apply_forward_model, gaussian_profile, rotate_z, rotation_valid_mask, upsample_axis_bicubic, ForwardModelConfig,
    SliceProfile,
};
use crate::volume::{Axis, Volume};

/// A degraded slice and its clean counterpart. Rows run along the degraded
/// axis, columns along a clean axis.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub input: Image,
    pub target: Image,
    pub angle: f64,
    pub slice: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_train: usize,
    pub r: usize,
    pub profile: SliceProfile,
    pub sigma: f64,
    pub seed: u64,
    /// Minimum in-field fraction of a rotated slice for it to be kept.
    pub min_coverage: f64,
}

impl TrainConfig {
    /// Ten rotations and a Gaussian profile of FWHM `r`.
    pub fn new(r: usize, sigma: f64, seed: u64) -> Self {
        Self {
            n_train: 10,
            r,
            profile: gaussian_profile(r as f64),
            sigma,
            seed,
            min_coverage: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 {
            return Err(Error::InvalidConfig("n_train must be >= 1".into()));
        }
        if self.r == 0 {
            return Err(Error::InvalidConfig("r must be >= 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidConfig("sigma must be >= 0".into()));
        }
        Ok(())
    }

    fn forward_model(&self, index: usize) -> ForwardModelConfig {
        ForwardModelConfig {
            r: self.r,
            profile: self.profile.clone(),
            sigma: self.sigma,
            seed: self.seed ^ index as u64,
        }
    }
}

/// Decimation factor implied by a volume's spacing, `round(Δz / Δx)`.
pub fn factor_from_spacing(v: &Volume) -> usize {
    v.inferred_factor()
}

/// Cubic upsampling of the acquired volume along `z`.
pub fn upsample_lowres(x_lr: &Volume, r: usize) -> Result<Volume> {
    upsample_axis_bicubic(x_lr, r, Axis::Z)
}

/// `n` angles evenly spaced over `[0°, 180°)`.
pub fn training_angles(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 * 180.0 / n as f64).collect()
}

/// Fraction of an `n x n` plane that stays inside the field after rotating
/// by `theta` degrees.
pub fn rotated_coverage(n: usize, theta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidVolume("empty plane".into()));
    }
    let valid = rotation_valid_mask(n, theta);
    Ok(valid.iter().filter(|&&v| v).count() as f64 / (n * n) as f64)
}

fn pairs_for_angle(
    x_up: &Volume,
    cfg: &TrainConfig,
    index: usize,
    theta: f64,
) -> Result<Vec<TrainingPair>> {
    let rotated = rotate_z(x_up, theta)?;
    let degraded = apply_forward_model(&rotated, &cfg.forward_model(index), Axis::X)?;
    let input = upsample_axis_bicubic(&degraded, cfg.r, Axis::X)?;
    let [nx, ny, nz] = input.dims();
    let target = rotated.crop([nx, ny, nz])?;
    Ok((0..nz)
        .map(|z| TrainingPair {
            input: input.axial_slice(z),
            target: target.axial_slice(z),
            angle: theta,
            slice: z,
        })
        .collect())
}

/// Builds the training pairs for every angle in `training_angles(n_train)`.
pub fn build_training_set(x_up: &Volume, cfg: &TrainConfig) -> Result<Vec<TrainingPair>> {
    cfg.validate()?;
    let [nx, ny, _] = x_up.dims();
    if nx != ny {
        return Err(Error::NonSquare { nx, ny });
    }
    let angles = training_angles(cfg.n_train);
    let per_angle: Vec<Result<Vec<TrainingPair>>> = angles
        .par_iter()
        .enumerate()
        .map(|(i, &theta)| {
            if rotated_coverage(nx, theta)? < cfg.min_coverage {
                return Ok(Vec::new());
            }
            pairs_for_angle(x_up, cfg, i, theta)
        })
        .collect();
    let mut pairs = Vec::new();
    for p in per_angle {
        pairs.extend(p?);
    }
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(pairs)
}

/// Writes every pair as 2D NIfTI files (`nz = 1`), one directory per angle.
pub fn dump_training_set(pairs: &[TrainingPair], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for p in pairs {
        let sub = dir.join(format!("theta_{:06.2}", p.angle));
        std::fs::create_dir_all(&sub)?;
        for (kind, img) in [("input", &p.input), ("target", &p.target)] {
            let v = Volume::new([img.rows(), img.cols(), 1], [1.0; 3], img.data().to_vec())?;
            write_nifti(&v, sub.join(format!("{kind}_{:04}.nii", p.slice)))?;
        }
    }
    Ok(())
}
