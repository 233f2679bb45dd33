//! Build self-supervised training pairs from one upsampled volume and fit
//! the U-Net to them.
//!
//! cargo run --release --example train_network -- [size] [r] [epochs]

use sair::{
    apply_forward_model, build_training_set, generate_phantom, train, upsample_lowres, Axis, ForwardModelConfig,
    PhantomSpec, TrainConfig, TrainOptions,
};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> sair::Result<()> {
    let size = arg(1, 48usize);
    let r = arg(2, 3usize);
    let (gt, _) = generate_phantom(&PhantomSpec { size, ..PhantomSpec::default() })?;
    let x_lr = apply_forward_model(&gt, &ForwardModelConfig::gaussian(r, 0.035, 1), Axis::Z)?;
    let x_up = upsample_lowres(&x_lr, r)?;

    let pairs = build_training_set(&x_up, &TrainConfig::new(r, 0.035, 2))?;
    println!("{} training pairs of {:?}", pairs.len(), pairs[0].input.shape());
    let opts = TrainOptions { epochs: arg(3, 15usize), patch_size: Some(32), ..TrainOptions::default() };
    let (net, report) = train(&pairs, &opts, 1)?;
    for (e, loss) in report.epoch_losses.iter().enumerate() {
        println!("epoch {:>3}  loss {loss:.4e}", e + 1);
    }
    println!("{} parameters", net.num_params());
    Ok(())
}
