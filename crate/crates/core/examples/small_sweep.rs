//! A reduced noise sweep written as CSV plus a manifest, then replayed from
//! the manifest.
//!
//! cargo run --release --example small_sweep -- [out_dir]

use std::path::PathBuf;

use sair::harness::{replay, threads_from_env};
use sair::{run_sweep, EnsembleConfig, ExperimentConfig, PhantomSpec, SweepKind, SweepManifest, SweepSpec, TrainOptions};

fn main() -> sair::Result<()> {
    let output_dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("sair_small_sweep"));
    let spec = SweepSpec {
        kind: SweepKind::Noise,
        r_values: vec![3],
        sigma_values: vec![0.02, 0.1],
        seeds: vec![1, 2],
        config: ExperimentConfig {
            phantom: PhantomSpec { size: 32, ..PhantomSpec::default() },
            n_train: 4,
            ensemble: EnsembleConfig::with_members(5),
            train: TrainOptions { epochs: 5, patch_size: Some(32), ..TrainOptions::default() },
        },
        output_dir,
    };
    let threads = threads_from_env();
    let outcome = run_sweep(&spec, threads)?;
    print!("{}", std::fs::read_to_string(&outcome.csv_path)?);

    let again = replay(&SweepManifest::load(&outcome.manifest_path)?, threads)?;
    let same = again.iter().zip(&outcome.rows).all(|(a, b)| a.ssim_sair == b.ssim_sair && a.mse_db_sair == b.mse_db_sair);
    println!("manifest {} replays identically: {same}", outcome.manifest_path.display());
    Ok(())
}
