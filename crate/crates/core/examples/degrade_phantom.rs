//! Generate a phantom and simulate a thick-slice acquisition along z.
//!
//! cargo run --release --example degrade_phantom -- [size] [r] [sigma] [out_dir]

use std::path::PathBuf;

use sair::{apply_forward_model, generate_phantom, upsample_lowres, write_nifti, Axis, ForwardModelConfig, PhantomSpec};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> sair::Result<()> {
    let size = arg(1, 64usize);
    let r = arg(2, 4usize);
    let sigma = arg(3, 0.035f64);
    let dir: PathBuf = arg(4, std::env::temp_dir());

    let (gt, mask) = generate_phantom(&PhantomSpec { size, ..PhantomSpec::default() })?;
    let x_lr = apply_forward_model(&gt, &ForwardModelConfig::gaussian(r, sigma, 1), Axis::Z)?;
    let x_up = upsample_lowres(&x_lr, r)?;
    println!("ground truth {:?}, mask fraction {:.3}", gt.dims(), mask.fraction());
    println!("low-res {:?} spacing {:?}", x_lr.dims(), x_lr.spacing());
    println!("cubic upsampled {:?}", x_up.dims());
    for (name, v) in [("phantom.nii", &gt), ("lowres.nii", &x_lr), ("cubic.nii", &x_up)] {
        write_nifti(v, dir.join(name))?;
    }
    write_nifti(&mask.to_volume(), dir.join("mask.nii"))?;
    println!("wrote volumes to {}", dir.display());
    Ok(())
}
