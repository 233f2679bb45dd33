//! The shallow residual U-Net, its gradients and its training loop.

pub mod checkpoint;
pub mod layers;
pub mod real;
pub mod train;
pub mod unet;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use real::Real;
pub use train::{train, train_from, OptimState, TrainOptions, TrainReport};
pub use unet::{apply_padded, unet_forward, UNetConfig, UNetParams};

use crate::dataset::TrainingPair;
use crate::error::Result;
use unet::Sample;

/// He-initialized parameters of the default architecture.
pub fn init_params(seed: u64) -> UNetParams<f32> {
    UNetParams::init(UNetConfig::default(), seed)
}

/// Mean squared error of the network over a batch of pairs and its gradient.
pub fn loss_and_grad<T: Real>(
    p: &UNetParams<T>,
    batch: &[TrainingPair],
) -> Result<(f64, UNetParams<T>)> {
    let samples = batch
        .iter()
        .map(|pair| Sample::from_images(&pair.input, &pair.target))
        .collect::<Result<Vec<_>>>()?;
    unet::batch_loss_and_grad(p, &samples)
}
