//! Write a volume to NIfTI-1 and read it back.
//!
//! cargo run --release --example nifti_roundtrip -- [path]

use sair::{read_nifti, write_nifti, Volume};

fn main() -> sair::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("sair_roundtrip.nii").display().to_string());
    let v = Volume::from_fn([20, 16, 8], [0.9, 0.9, 3.6], |x, y, z| (x + 2 * y) as f64 / 52.0 + 0.01 * z as f64)?;
    write_nifti(&v, &path)?;
    let back = read_nifti(&path)?;
    let worst = v.data().iter().zip(back.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("{path}: dims {:?}, spacing {:?}, max abs diff {worst:.2e}", back.dims(), back.spacing());
    Ok(())
}
