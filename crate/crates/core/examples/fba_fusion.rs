//! Fuse differently blurred copies of a volume per frequency. Each member
//! loses detail along a different direction; the fusion keeps the sharpest
//! member at every frequency.
//!
//! cargo run --release --example fba_fusion

use sair::{blur_axis, fba_fuse, gaussian_profile, Axis, EnsembleConfig, Volume};

fn rms(a: &Volume, b: &Volume) -> f64 {
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    (s / a.len() as f64).sqrt()
}

fn main() -> sair::Result<()> {
    let v = Volume::from_fn([32, 32, 32], [1.0; 3], |x, y, z| {
        let (x, y, z) = (x as f64, y as f64, z as f64);
        (0.9 * x).sin() * (0.2 * y).cos() + (0.8 * y + 0.1 * z).sin() + 0.5 * (1.1 * z).cos()
    })?;
    let profile = gaussian_profile(4.0);
    let members = [Axis::X, Axis::Y, Axis::Z]
        .iter()
        .map(|&a| blur_axis(&v, &profile, a))
        .collect::<sair::Result<Vec<_>>>()?;
    for (axis, m) in ["x", "y", "z"].iter().zip(&members) {
        println!("blurred along {axis}: rms error {:.4}", rms(m, &v));
    }
    let mean = members[0].zip_map(&members[1], |a, b| a + b)?.zip_map(&members[2], |s, c| (s + c) / 3.0)?;
    println!("plain average:     rms error {:.4}", rms(&mean, &v));
    let fused = fba_fuse(&members, &EnsembleConfig::with_members(members.len()))?;
    println!("fourier fusion:    rms error {:.4}", rms(&fused, &v));
    Ok(())
}
