//! Oracles shared by the test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sair::dataset::TrainingPair;
use sair::nn::unet::LAYER_NAMES;
use sair::nn::{loss_and_grad, UNetConfig, UNetParams};
use sair::{Image, Mask, Volume};

/// Default-architecture parameters in double precision with a non-zero
/// head and biases, so every layer receives gradient.
pub fn grad_check_params(seed: u64) -> UNetParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = UNetParams::<f64>::init(UNetConfig::default(), seed);
    for w in p.head.weight.iter_mut() {
        *w = 0.5 * (rng.gen::<f64>() - 0.5);
    }
    for l in p.layers_mut() {
        for b in l.bias.iter_mut() {
            *b = 0.05 * (rng.gen::<f64>() - 0.5);
        }
    }
    p
}

pub struct GradCheck {
    pub checked: usize,
    /// Stencils narrowed because a ReLU or pooling winner switched inside.
    pub kinks: usize,
    pub worst: f64,
    pub failures: Vec<String>,
}

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Compares analytic gradients with central differences on a batch of two
/// random 16x16 pairs, `per_tensor` sampled coordinates of every weight and
/// bias tensor.
pub fn gradient_check(per_tensor: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = grad_check_params(seed ^ 5);
    let image = |rng: &mut ChaCha8Rng| Image::from_fn(16, 16, |_, _| rng.gen::<f64>());
    let batch: Vec<TrainingPair> = (0..2)
        .map(|_| TrainingPair {
            input: image(&mut rng),
            target: image(&mut rng),
            angle: 0.0,
            slice: 0,
        })
        .collect();
    let (_, grad) = loss_and_grad(&p, &batch).unwrap();
    let analytic = grad.tensors();
    let names: Vec<String> = LAYER_NAMES
        .iter()
        .flat_map(|n| [format!("{n}.weight"), format!("{n}.bias")])
        .collect();

    let perturbed = |t: usize, i: usize, h: f64| {
        let mut q = p.clone();
        q.tensors_mut()[t][i] += h;
        q
    };
    let central = |t: usize, i: usize, h: f64| {
        let lp = loss_and_grad(&perturbed(t, i, h), &batch).unwrap().0;
        let lm = loss_and_grad(&perturbed(t, i, -h), &batch).unwrap().0;
        (lp - lm) / (2.0 * h)
    };
    let patterns = |q: &UNetParams<f64>| -> Vec<Vec<u8>> {
        batch
            .iter()
            .map(|s| q.forward_cached(s.input.data(), 16, 16).unwrap().1.pattern())
            .collect()
    };

    let mut out = GradCheck {
        checked: 0,
        kinks: 0,
        worst: 0.0,
        failures: Vec::new(),
    };
    for (t, name) in names.iter().enumerate() {
        let len = analytic[t].len();
        let picks: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            (0..per_tensor).map(|_| rng.gen_range(0..len)).collect()
        };
        for i in picks {
            let a = analytic[t][i];
            // With the activation pattern fixed the loss is quadratic in a
            // single parameter and the central difference is exact up to
            // rounding. A stencil straddling a switch is narrowed until it
            // no longer does.
            let mut h = FD_STEP;
            while h > 1e-8 && patterns(&perturbed(t, i, h)) != patterns(&perturbed(t, i, -h)) {
                h *= 0.1;
            }
            if h < FD_STEP {
                out.kinks += 1;
            }
            let n = central(t, i, h);
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            out.checked += 1;
            out.worst = out.worst.max(rel);
            if rel >= FD_TOLERANCE {
                out.failures.push(format!("{name}[{i}]: analytic {a:e} numeric {n:e}"));
            }
        }
    }
    out
}

/// Mean SSIM written straight from its definition: for each axial pixel, a
/// 2D Gaussian window (σ = 1.5, radius 5) restricted to the plane and
/// renormalized, weighted means, variances and covariance, then the
/// luminance-contrast-structure product. Averaged over masked voxels.
pub fn ssim_oracle(a: &Volume, b: &Volume, m: &Mask) -> f64 {
    let [nx, ny, nz] = a.dims();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0usize;
    for z in 0..nz {
        for x in 0..nx {
            for y in 0..ny {
                if !m.get(x, y, z) {
                    continue;
                }
                let mut win = Vec::new();
                for dx in -5i64..=5 {
                    for dy in -5i64..=5 {
                        let (px, py) = (x as i64 + dx, y as i64 + dy);
                        if px < 0 || py < 0 || px >= nx as i64 || py >= ny as i64 {
                            continue;
                        }
                        let w = (-((dx * dx + dy * dy) as f64) / (2.0 * 1.5 * 1.5)).exp();
                        win.push((w, a.get(px as usize, py as usize, z), b.get(px as usize, py as usize, z)));
                    }
                }
                let wsum: f64 = win.iter().map(|t| t.0).sum();
                let mu_a = win.iter().map(|t| t.0 * t.1).sum::<f64>() / wsum;
                let mu_b = win.iter().map(|t| t.0 * t.2).sum::<f64>() / wsum;
                let var_a = win.iter().map(|t| t.0 * (t.1 - mu_a).powi(2)).sum::<f64>() / wsum;
                let var_b = win.iter().map(|t| t.0 * (t.2 - mu_b).powi(2)).sum::<f64>() / wsum;
                let cov = win.iter().map(|t| t.0 * (t.1 - mu_a) * (t.2 - mu_b)).sum::<f64>() / wsum;
                let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                total += s;
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Direct masked mean squared error in decibels.
pub fn mse_db_oracle(a: &Volume, b: &Volume, m: &Mask) -> f64 {
    let (mut sse, mut n) = (0.0, 0.0);
    for (i, keep) in m.data().iter().enumerate() {
        if *keep {
            sse += (a.data()[i] - b.data()[i]).powi(2);
            n += 1.0;
        }
    }
    (10.0 * (sse / n).log10()).max(-300.0)
}
