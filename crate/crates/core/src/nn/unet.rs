//! Shallow residual 2D U-Net: one encoder step, one decoder step, one skip
//! connection.
//!
//! ```text
//! x ─ enc_a ─ enc_b ─┬──────────────────────────── concat ─ dec_a ─ dec_b ─ head ─ (+x)
//!                    └ pool ─ bott_a ─ bott_b ─ up2 ─┘
//! ```
//!
//! Every convolution except the 1x1 head is followed by a ReLU.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{self, ConvLayer};
use super::real::Real;
use crate::error::{Error, Result};
use crate::image::Image;

/// Channel widths and kernel size of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub channels: usize,
    pub bottleneck_channels: usize,
    pub kernel: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            bottleneck_channels: 64,
            kernel: 7,
        }
    }
}

/// Smallest accepted image side.
pub const MIN_SIDE: usize = 8;

pub const LAYER_NAMES: [&str; 7] = ["enc_a", "enc_b", "bott_a", "bott_b", "dec_a", "dec_b", "head"];

#[derive(Clone, Debug, PartialEq)]
pub struct UNetParams<T> {
    pub config: UNetConfig,
    pub enc_a: ConvLayer<T>,
    pub enc_b: ConvLayer<T>,
    pub bott_a: ConvLayer<T>,
    pub bott_b: ConvLayer<T>,
    pub dec_a: ConvLayer<T>,
    pub dec_b: ConvLayer<T>,
    pub head: ConvLayer<T>,
}

impl<T: Real> UNetParams<T> {
    pub fn zeros(config: UNetConfig) -> Self {
        let (c, b, k) = (config.channels, config.bottleneck_channels, config.kernel);
        Self {
            config,
            enc_a: ConvLayer::zeros(1, c, k),
            enc_b: ConvLayer::zeros(c, c, k),
            bott_a: ConvLayer::zeros(c, b, k),
            bott_b: ConvLayer::zeros(b, b, k),
            dec_a: ConvLayer::zeros(b + c, c, k),
            dec_b: ConvLayer::zeros(c, c, k),
            head: ConvLayer::zeros(c, 1, 1),
        }
    }

    /// He-scaled Gaussian weights (`std = sqrt(2 / fan_in)`) for every
    /// convolution, zero biases, and a zero head so the network starts as
    /// the identity map.
    pub fn init(config: UNetConfig, seed: u64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in p.layers_mut().into_iter().take(6) {
            let std = (2.0 / layer.fan_in() as f64).sqrt();
            for w in layer.weight.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = T::of_f64(std * z);
            }
        }
        p
    }

    pub fn layers(&self) -> [&ConvLayer<T>; 7] {
        [
            &self.enc_a,
            &self.enc_b,
            &self.bott_a,
            &self.bott_b,
            &self.dec_a,
            &self.dec_b,
            &self.head,
        ]
    }

    pub fn layers_mut(&mut self) -> [&mut ConvLayer<T>; 7] {
        [
            &mut self.enc_a,
            &mut self.enc_b,
            &mut self.bott_a,
            &mut self.bott_b,
            &mut self.dec_a,
            &mut self.dec_b,
            &mut self.head,
        ]
    }

    /// Weight and bias buffers of every layer, in `LAYER_NAMES` order.
    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers()
            .into_iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.num_params()).sum()
    }

    pub fn cast<U: Real>(&self) -> UNetParams<U> {
        UNetParams {
            config: self.config,
            enc_a: self.enc_a.cast(),
            enc_b: self.enc_b.cast(),
            bott_a: self.bott_a.cast(),
            bott_b: self.bott_b.cast(),
            dec_a: self.dec_a.cast(),
            dec_b: self.dec_b.cast(),
            head: self.head.cast(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += other`, element-wise.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache<T> {
    h: usize,
    w: usize,
    x: Vec<T>,
    a1: Vec<T>,
    a2: Vec<T>,
    pool_arg: Vec<u8>,
    p: Vec<T>,
    b1: Vec<T>,
    b2: Vec<T>,
    cat: Vec<T>,
    d1: Vec<T>,
    d2: Vec<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Which ReLUs fire and which max-pool inputs win. The network is
    /// smooth in its parameters wherever this stays fixed.
    pub fn pattern(&self) -> Vec<u8> {
        let fires = [&self.a1, &self.a2, &self.b1, &self.b2, &self.d1, &self.d2]
            .into_iter()
            .flat_map(|a| a.iter().map(|v| u8::from(*v > T::zero())));
        fires.chain(self.pool_arg.iter().copied()).collect()
    }
}

fn check_shape(h: usize, w: usize) -> Result<()> {
    if h < MIN_SIDE || w < MIN_SIDE || h % 2 == 1 || w % 2 == 1 {
        return Err(Error::ImageTooSmall { rows: h, cols: w });
    }
    Ok(())
}

impl<T: Real> UNetParams<T> {
    /// Forward pass on a single-channel `h x w` image; returns the output
    /// and the cache needed by [`UNetParams::backward`].
    pub fn forward_cached(&self, x: &[T], h: usize, w: usize) -> Result<(Vec<T>, ForwardCache<T>)> {
        let (f, cache) = self.residual_cached(x, h, w)?;
        let out = x.iter().zip(&f).map(|(a, b)| *a + *b).collect();
        Ok((out, cache))
    }

    /// The learned correction `f(x)`; the network output is `x + f(x)`.
    pub fn residual(&self, x: &[T], h: usize, w: usize) -> Result<Vec<T>> {
        Ok(self.residual_cached(x, h, w)?.0)
    }

    fn residual_cached(&self, x: &[T], h: usize, w: usize) -> Result<(Vec<T>, ForwardCache<T>)> {
        check_shape(h, w)?;
        if x.len() != h * w {
            return Err(Error::ShapeMismatch(format!("{} values for {h}x{w}", x.len())));
        }
        let c = self.config.channels;
        let (h2, w2) = (h / 2, w / 2);

        let mut a1 = self.enc_a.forward(x, h, w);
        layers::relu_inplace(&mut a1);
        let mut a2 = self.enc_b.forward(&a1, h, w);
        layers::relu_inplace(&mut a2);
        let (p, pool_arg) = layers::maxpool2(&a2, h, w, c);
        let mut b1 = self.bott_a.forward(&p, h2, w2);
        layers::relu_inplace(&mut b1);
        let mut b2 = self.bott_b.forward(&b1, h2, w2);
        layers::relu_inplace(&mut b2);
        let up = layers::upsample2(&b2, h2, w2, self.config.bottleneck_channels);
        let cat = layers::concat(&up, self.config.bottleneck_channels, &a2, c);
        drop(up);
        let mut d1 = self.dec_a.forward(&cat, h, w);
        layers::relu_inplace(&mut d1);
        let mut d2 = self.dec_b.forward(&d1, h, w);
        layers::relu_inplace(&mut d2);
        let f = self.head.forward(&d2, h, w);
        Ok((
            f,
            ForwardCache {
                h,
                w,
                x: x.to_vec(),
                a1,
                a2,
                pool_arg,
                p,
                b1,
                b2,
                cat,
                d1,
                d2,
            },
        ))
    }

    pub fn forward(&self, x: &[T], h: usize, w: usize) -> Result<Vec<T>> {
        Ok(self.forward_cached(x, h, w)?.0)
    }

    /// Parameter gradients for an output gradient `dout`.
    pub fn backward(&self, cache: &ForwardCache<T>, dout: &[T]) -> UNetParams<T> {
        let (h, w) = (cache.h, cache.w);
        let (h2, w2) = (h / 2, w / 2);
        let c = self.config.channels;
        let b = self.config.bottleneck_channels;
        let mut g = UNetParams::zeros(self.config);

        let mut dd2 = self.head.backward(&cache.d2, h, w, dout, &mut g.head, true).unwrap();
        layers::relu_backward(&cache.d2, &mut dd2);
        let mut dd1 = self.dec_b.backward(&cache.d1, h, w, &dd2, &mut g.dec_b, true).unwrap();
        layers::relu_backward(&cache.d1, &mut dd1);
        let dcat = self.dec_a.backward(&cache.cat, h, w, &dd1, &mut g.dec_a, true).unwrap();
        let (dup, mut da2) = layers::split(&dcat, b, c);
        let mut db2 = layers::upsample2_backward(&dup, h2, w2, b);
        layers::relu_backward(&cache.b2, &mut db2);
        let mut db1 = self.bott_b.backward(&cache.b1, h2, w2, &db2, &mut g.bott_b, true).unwrap();
        layers::relu_backward(&cache.b1, &mut db1);
        let dp = self.bott_a.backward(&cache.p, h2, w2, &db1, &mut g.bott_a, true).unwrap();
        let from_pool = layers::maxpool2_backward(&dp, &cache.pool_arg, h, w, c);
        for (d, e) in da2.iter_mut().zip(&from_pool) {
            *d += *e;
        }
        layers::relu_backward(&cache.a2, &mut da2);
        let mut da1 = self.enc_b.backward(&cache.a1, h, w, &da2, &mut g.enc_b, true).unwrap();
        layers::relu_backward(&cache.a1, &mut da1);
        self.enc_a.backward(&cache.x, h, w, &da1, &mut g.enc_a, false);
        g
    }
}

/// Applies the network to an image whose sides are even and at least
/// [`MIN_SIDE`]. The skip `x + f(x)` is added in `f64`, so a network whose
/// correction is zero returns its input exactly.
pub fn unet_forward<T: Real>(p: &UNetParams<T>, img: &Image) -> Result<Image> {
    let x: Vec<T> = img.data().iter().map(|&v| T::of_f64(v)).collect();
    let f = p.residual(&x, img.rows(), img.cols())?;
    let out = img.data().iter().zip(f).map(|(&a, b)| a + b.as_f64()).collect();
    Image::new(img.rows(), img.cols(), out)
}

/// Applies the network to an image of any size at least 1x1 by replicating
/// the last row/column up to an even size >= [`MIN_SIDE`], then cropping.
pub fn apply_padded<T: Real>(p: &UNetParams<T>, img: &Image) -> Result<Image> {
    let padded = img.pad_even(MIN_SIDE);
    let out = unet_forward(p, &padded)?;
    if padded.shape() == img.shape() {
        return Ok(out);
    }
    out.window(0, 0, img.rows(), img.cols())
}

/// One (input, target) pair in network precision.
#[derive(Clone, Debug)]
pub struct Sample<T> {
    pub rows: usize,
    pub cols: usize,
    pub input: Vec<T>,
    pub target: Vec<T>,
}

impl<T: Real> Sample<T> {
    pub fn from_images(input: &Image, target: &Image) -> Result<Self> {
        if input.shape() != target.shape() {
            return Err(Error::ShapeMismatch(format!(
                "input {:?} vs target {:?}",
                input.shape(),
                target.shape()
            )));
        }
        let conv = |img: &Image| img.data().iter().map(|&v| T::of_f64(v)).collect();
        Ok(Self {
            rows: input.rows(),
            cols: input.cols(),
            input: conv(input),
            target: conv(target),
        })
    }
}

/// Mean squared error over every pixel of every sample, and its exact
/// gradient. Per-sample work may run in parallel; gradients are summed in
/// sample order so the result does not depend on the thread count.
pub fn batch_loss_and_grad<T: Real>(
    p: &UNetParams<T>,
    batch: &[Sample<T>],
) -> Result<(f64, UNetParams<T>)> {
    let first = batch
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty batch".into()))?;
    if batch.iter().any(|s| (s.rows, s.cols) != (first.rows, first.cols)) {
        return Err(Error::ShapeMismatch("samples in a batch differ in shape".into()));
    }
    let count = (batch.len() * first.rows * first.cols) as f64;
    let scale = T::of_f64(2.0 / count);

    let per_sample: Vec<Result<(f64, UNetParams<T>)>> = batch
        .par_iter()
        .map(|s| {
            let (out, cache) = p.forward_cached(&s.input, s.rows, s.cols)?;
            let mut sse = 0.0;
            let dout: Vec<T> = out
                .iter()
                .zip(&s.target)
                .map(|(o, t)| {
                    let d = *o - *t;
                    sse += d.as_f64() * d.as_f64();
                    d * scale
                })
                .collect();
            Ok((sse, p.backward(&cache, &dout)))
        })
        .collect();

    let mut total = 0.0;
    let mut grads = UNetParams::zeros(p.config);
    for r in per_sample {
        let (sse, g) = r?;
        total += sse;
        grads.add_assign(&g);
    }
    Ok((total / count, grads))
}
