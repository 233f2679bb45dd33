//! Degrade a phantom along z, reconstruct it and compare against cubic
//! upsampling.
//!
//! cargo run --release --example reconstruct_phantom -- [size] [r] [sigma] [epochs] [batches] [patch] [n_pred] [seeds]

use std::time::Instant;

use sair::harness::{run_cell, CellSpec, ExperimentConfig};
use sair::{generate_phantom, EnsembleConfig, PhantomSpec, TrainOptions};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> sair::Result<()> {
    let size = arg(1, 64usize);
    let r = arg(2, 4usize);
    let sigma = arg(3, 0.035f64);
    let d = TrainOptions::default();
    let cfg = ExperimentConfig {
        phantom: PhantomSpec { size, ..PhantomSpec::default() },
        n_train: 10,
        ensemble: EnsembleConfig::with_members(arg(7, 15usize)),
        train: TrainOptions {
            epochs: arg(4, d.epochs),
            batches_per_epoch: Some(arg(5, d.batches_per_epoch.unwrap_or(3))),
            patch_size: Some(arg(6, d.patch_size.unwrap_or(64))),
            ..d.clone()
        },
    };
    let t = Instant::now();
    let (gt, mask) = generate_phantom(&cfg.phantom)?;
    println!("phantom {size}^3, mask fraction {:.3}", mask.fraction());
    for seed in 1..=arg(8, 1u64) {
        let m = run_cell(&gt, &mask, &cfg, CellSpec { r, sigma, seed })?;
        println!(
            "seed {seed}: cubic ssim {:.4} mse {:.2} dB | reconstruction ssim {:.4} mse {:.2} dB | loss {:.3e} | {:.1}s",
            m.baseline.ssim, m.baseline.mse_db, m.sair.ssim, m.sair.mse_db, m.final_loss, m.wall_seconds
        );
    }
    println!("total {:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
