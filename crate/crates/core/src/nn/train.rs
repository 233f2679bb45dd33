//! Per-volume training loop with Adam updates.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::real::Real;
use super::unet::{batch_loss_and_grad, Sample, UNetConfig, UNetParams, MIN_SIDE};
use crate::dataset::TrainingPair;
use crate::error::{Error, Result};

/// Optimizer and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Batches drawn per epoch; `None` sweeps every pair once per epoch.
    pub batches_per_epoch: Option<usize>,
    /// Side of square random crops; `None` trains on full slices.
    pub patch_size: Option<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub network: UNetConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            batches_per_epoch: Some(3),
            patch_size: Some(64),
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            network: UNetConfig::default(),
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be >= 1".into()));
        }
        if self.batches_per_epoch == Some(0) {
            return Err(Error::InvalidConfig("batches per epoch must be >= 1".into()));
        }
        if let Some(p) = self.patch_size {
            if p < MIN_SIDE || p % 2 == 1 {
                return Err(Error::InvalidConfig(format!(
                    "patch size must be even and >= {MIN_SIDE}, got {p}"
                )));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moment estimates.
#[derive(Clone, Debug)]
pub struct OptimState<T> {
    pub first: UNetParams<T>,
    pub second: UNetParams<T>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Real> OptimState<T> {
    pub fn new(config: UNetConfig, opts: &TrainOptions) -> Self {
        Self {
            first: UNetParams::zeros(config),
            second: UNetParams::zeros(config),
            step: 0,
            learning_rate: opts.learning_rate,
            beta1: opts.beta1,
            beta2: opts.beta2,
            epsilon: opts.epsilon,
        }
    }

    /// One bias-corrected Adam update of `params` with gradient `grad`.
    pub fn update(&mut self, params: &mut UNetParams<T>, grad: &UNetParams<T>) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::of_f64(self.beta1);
        let b2 = T::of_f64(self.beta2);
        let one = T::one();
        let step_size = T::of_f64(
            self.learning_rate * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t)),
        );
        let eps_hat = T::of_f64(self.epsilon * (1.0 - self.beta2.powi(t)).sqrt());
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut())
            .zip(grad.tensors());
        for (((p, m), v), g) in tensors {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                p[i] -= step_size * m[i] / (v[i].sqrt() + eps_hat);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub epochs: usize,
    pub seed: u64,
}

/// Largest even side not above `n`.
fn even_floor(n: usize) -> usize {
    n - n % 2
}

fn make_sample<T: Real>(
    pair: &TrainingPair,
    patch: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Sample<T>> {
    let (rows, cols) = pair.input.shape();
    let (h, w) = match patch {
        Some(p) => (p.min(even_floor(rows)), p.min(even_floor(cols))),
        None => (even_floor(rows), even_floor(cols)),
    };
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(Error::ImageTooSmall { rows, cols });
    }
    let r0 = if rows > h { rng.gen_range(0..=rows - h) } else { 0 };
    let c0 = if cols > w { rng.gen_range(0..=cols - w) } else { 0 };
    Sample::from_images(&pair.input.window(r0, c0, h, w)?, &pair.target.window(r0, c0, h, w)?)
}

/// Trains a freshly initialized network on `pairs`.
pub fn train(
    pairs: &[TrainingPair],
    opts: &TrainOptions,
    seed: u64,
) -> Result<(UNetParams<f32>, TrainReport)> {
    let params = UNetParams::init(opts.network, seed);
    train_from(params, pairs, opts, seed)
}

/// Continues training from `params`. Batch order and crops depend only on
/// `seed`, and gradients are reduced in a fixed order, so the result is
/// bitwise reproducible for any thread count.
pub fn train_from<T: Real>(
    mut params: UNetParams<T>,
    pairs: &[TrainingPair],
    opts: &TrainOptions,
    seed: u64,
) -> Result<(UNetParams<T>, TrainReport)> {
    opts.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut optim = OptimState::new(params.config, opts);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let take = match opts.batches_per_epoch {
            Some(nb) => nb * opts.batch_size,
            None => pairs.len(),
        };
        // cycle through the shuffled order when more samples are requested
        let picks: Vec<usize> = order.iter().cycle().take(take).copied().collect();

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch_idx in picks.chunks(opts.batch_size) {
            let batch = batch_idx
                .iter()
                .map(|&i| make_sample::<T>(&pairs[i], opts.patch_size, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let (loss, grad) = batch_loss_and_grad(&params, &batch)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            optim.update(&mut params, &grad);
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        let epoch_loss = loss_sum / seen as f64;
        if !epoch_loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        epoch_losses.push(epoch_loss);
    }
    let final_loss = *epoch_losses.last().expect("at least one epoch");
    Ok((
        params,
        TrainReport {
            epoch_losses,
            final_loss,
            epochs: opts.epochs,
            seed,
        },
    ))
}
