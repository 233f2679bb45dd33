//! Masked MSE (dB) and SSIM between a phantom and degraded versions of it.
//!
//! cargo run --release --example evaluate_metrics

use sair::{add_gaussian_noise, blur_axis, evaluate, gaussian_profile, generate_phantom, Axis, PhantomSpec};

fn main() -> sair::Result<()> {
    let (gt, mask) = generate_phantom(&PhantomSpec { size: 48, ..PhantomSpec::default() })?;
    println!("{:<22} {:>9} {:>7}", "test volume", "mse (dB)", "ssim");
    for sigma in [0.01, 0.05, 0.1] {
        let noisy = add_gaussian_noise(&gt, sigma, 3)?;
        let e = evaluate(&gt, &noisy, &mask)?;
        println!("{:<22} {:>9.2} {:>7.4}", format!("noise sigma {sigma}"), e.mse_db, e.ssim);
    }
    for r in [2.0, 4.0, 6.0] {
        let blurred = blur_axis(&gt, &gaussian_profile(r), Axis::Z)?;
        let e = evaluate(&gt, &blurred, &mask)?;
        println!("{:<22} {:>9.2} {:>7.4}", format!("z blur fwhm {r}"), e.mse_db, e.ssim);
    }
    Ok(())
}
