//! Self-supervised superresolution of anisotropic 3D volumes.
//!
//! A volume acquired with thick slices along `z` is upsampled with cubic
//! interpolation, then restored by a small 2D U-Net trained on that same
//! volume: in-plane slices are rotated, degraded along one in-plane axis with
//! the acquisition model, and used as (input, target) pairs. At inference the
//! network runs on planes containing `z` for several rotations of the volume,
//! and the predictions are fused per frequency with Fourier burst
//! accumulation.
//!
//! ```no_run
//! use sair::{apply_forward_model, generate_phantom, run_sair, Axis, EnsembleConfig,
//!            ForwardModelConfig, PhantomSpec, TrainConfig, TrainOptions};
//!
//! let (gt, _mask) = generate_phantom(&PhantomSpec::default())?;
//! let x_lr = apply_forward_model(&gt, &ForwardModelConfig::gaussian(4, 0.035, 1), Axis::Z)?;
//! let run = run_sair(
//!     &x_lr,
//!     4,
//!     &TrainConfig::new(4, 0.035, 2),
//!     &EnsembleConfig::default(),
//!     &TrainOptions::default(),
//!     1,
//! )?;
//! println!("{:?}", run.reconstruction.dims());
//! # Ok::<(), sair::Error>(())
//! ```

pub mod dataset;
pub mod error;
pub mod fba;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod nifti;
pub mod nn;
pub mod operators;
pub mod phantom;
pub mod pipeline;
pub mod volume;

pub use dataset::{
    build_training_set, factor_from_spacing, training_angles, upsample_lowres, TrainConfig,
    TrainingPair,
};
pub use error::{Error, Result};
pub use fba::{fba_fuse, fba_weights, fft3, ifft3, EnsembleConfig, Spectrum};
pub use harness::{run_sweep, ExperimentConfig, SweepKind, SweepManifest, SweepSpec};
pub use image::Image;
pub use metrics::{evaluate, mse_db, ssim_masked, EvalResult};
pub use nifti::{read_nifti, write_nifti};
pub use nn::{init_params, train, TrainOptions, TrainReport, UNetConfig, UNetParams};
pub use operators::{
    add_gaussian_noise, apply_forward_model, blur_axis, downsample_axis, gaussian_profile,
    rotate_z, upsample_axis_bicubic, ForwardModelConfig, SliceProfile,
};
pub use phantom::{generate_phantom, PhantomSpec};
pub use pipeline::{
    predict_ensemble, predict_single_angle, reconstruct, run_sair, train_on_volume,
    ReconstructionJob, SairRun,
};
pub use volume::{normalize_intensities, Axis, IntensityScale, Mask, Volume};
