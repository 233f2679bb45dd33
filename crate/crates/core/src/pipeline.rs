//! Rotation-ensemble prediction and the end-to-end reconstruction.

use rayon::prelude::*;

use crate::dataset::{build_training_set, upsample_lowres, TrainConfig};
use crate::error::{Error, Result};
use crate::fba::{fba_fuse, EnsembleConfig};
use crate::nn::{apply_padded, train, Real, TrainOptions, TrainReport, UNetParams};
use crate::operators::rotate_z;
use crate::volume::Volume;

/// Everything needed to reconstruct one acquired volume with a trained
/// network.
#[derive(Clone, Debug)]
pub struct ReconstructionJob {
    pub x_lr: Volume,
    pub r: usize,
    pub train_cfg: TrainConfig,
    pub ens_cfg: EnsembleConfig,
    pub net: UNetParams<f32>,
    pub seed: u64,
}

impl ReconstructionJob {
    /// `r` must agree with the spacing ratio of `x_lr` within 10%.
    pub fn validate(&self) -> Result<()> {
        check_factor(&self.x_lr, self.r)?;
        self.ens_cfg.validate()
    }
}

fn check_factor(x_lr: &Volume, r: usize) -> Result<()> {
    let ratio = x_lr.resolution_ratio();
    if r == 0 || (ratio - r as f64).abs() > 0.1 * r as f64 {
        return Err(Error::InvalidConfig(format!(
            "factor {r} disagrees with the spacing ratio {ratio:.3}"
        )));
    }
    Ok(())
}

/// Fraction of each in-plane position that survives rotating by `theta`
/// and back: 1 well inside the inscribed disk, 0 in the lost corners.
fn round_trip_coverage(n: usize, theta: f64) -> Result<Vec<f64>> {
    let ones = Volume::filled([n, n, 1], [1.0; 3], 1.0)?;
    Ok(rotate_z(&rotate_z(&ones, theta)?, -theta)?.into_data())
}

/// Rotates `x_up` by `theta`, runs the network on every fixed-`y` plane
/// (rows along `z`, the blurry axis), and rotates back. Positions the
/// rotation carried out of the grid are filled from `x_up`.
pub fn predict_single_angle<T: Real>(net: &UNetParams<T>, x_up: &Volume, theta: f64) -> Result<Volume> {
    let (padded, offset) = x_up.pad_square();
    let rotated = rotate_z(&padded, theta)?;
    let [n, ny, nz] = rotated.dims();
    let planes = (0..ny)
        .into_par_iter()
        .map(|y| apply_padded(net, &rotated.coronal_slice(y)))
        .collect::<Result<Vec<_>>>()?;
    let restored = Volume::from_coronal_slices(&planes, rotated.spacing())
        .map_err(|_| Error::NonFinite("network output"))?;
    let back = rotate_z(&restored, -theta)?;
    let coverage = round_trip_coverage(n, theta)?;
    let mut data = back.into_data();
    for (i, line) in data.chunks_mut(nz).enumerate() {
        let fill = 1.0 - coverage[i];
        if fill != 0.0 {
            let src = &padded.data()[i * nz..(i + 1) * nz];
            for (d, s) in line.iter_mut().zip(src) {
                *d += fill * s;
            }
        }
    }
    let member = Volume::new(padded.dims(), padded.spacing(), data)
        .map_err(|_| Error::NonFinite("network output"))?;
    Ok(member.unpad_square(x_up.dims(), offset))
}

/// Member predictions for every ensemble angle, ordered by angle.
pub fn predict_ensemble<T: Real>(
    net: &UNetParams<T>,
    x_up: &Volume,
    ens_cfg: &EnsembleConfig,
) -> Result<Vec<Volume>> {
    ens_cfg.validate()?;
    ens_cfg
        .angles()
        .into_iter()
        .map(|theta| predict_single_angle(net, x_up, theta))
        .collect()
}

/// Upsamples `x_lr`, predicts the rotation ensemble and fuses it.
pub fn reconstruct(job: &ReconstructionJob) -> Result<Volume> {
    job.validate()?;
    let x_up = upsample_lowres(&job.x_lr, job.r)?;
    let preds = predict_ensemble(&job.net, &x_up, &job.ens_cfg)?;
    fba_fuse(&preds, &job.ens_cfg)
}

/// Output of [`run_sair`].
#[derive(Clone, Debug)]
pub struct SairRun {
    pub reconstruction: Volume,
    pub upsampled: Volume,
    pub network: UNetParams<f32>,
    pub report: TrainReport,
}

fn check_training_factor(x_lr: &Volume, r: usize, train_cfg: &TrainConfig) -> Result<()> {
    check_factor(x_lr, r)?;
    if train_cfg.r != r {
        return Err(Error::InvalidConfig(format!(
            "training factor {} differs from r = {r}",
            train_cfg.r
        )));
    }
    Ok(())
}

fn train_upsampled(
    x_up: &Volume,
    train_cfg: &TrainConfig,
    opts: &TrainOptions,
    seed: u64,
) -> Result<(UNetParams<f32>, TrainReport)> {
    let pairs = build_training_set(x_up, train_cfg)?;
    train(&pairs, opts, seed)
}

/// Trains a network on pairs synthesized from `x_lr` alone.
pub fn train_on_volume(
    x_lr: &Volume,
    r: usize,
    train_cfg: &TrainConfig,
    opts: &TrainOptions,
    seed: u64,
) -> Result<(UNetParams<f32>, TrainReport)> {
    check_training_factor(x_lr, r, train_cfg)?;
    train_upsampled(&upsample_lowres(x_lr, r)?, train_cfg, opts, seed)
}

/// Upsample, synthesize training pairs, train, then reconstruct.
pub fn run_sair(
    x_lr: &Volume,
    r: usize,
    train_cfg: &TrainConfig,
    ens_cfg: &EnsembleConfig,
    opts: &TrainOptions,
    seed: u64,
) -> Result<SairRun> {
    check_training_factor(x_lr, r, train_cfg)?;
    let x_up = upsample_lowres(x_lr, r)?;
    let (network, report) = train_upsampled(&x_up, train_cfg, opts, seed)?;
    let job = ReconstructionJob {
        x_lr: x_lr.clone(),
        r,
        train_cfg: train_cfg.clone(),
        ens_cfg: ens_cfg.clone(),
        net: network,
        seed,
    };
    let reconstruction = reconstruct(&job)?;
    Ok(SairRun {
        reconstruction,
        upsampled: x_up,
        network: job.net,
        report,
    })
}
