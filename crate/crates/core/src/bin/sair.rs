use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sair::harness::{
    encode_csv, manifest_path_for, replay, run_sweep, threads_from_env,
    ExperimentConfig, RunManifest, SweepKind, SweepManifest, SweepSpec,
};
use sair::nifti::write_atomic as write_file;
use sair::nn::{load_checkpoint, save_checkpoint};
use sair::{
    apply_forward_model, evaluate, factor_from_spacing, generate_phantom, normalize_intensities,
    read_nifti, reconstruct, train_on_volume, write_nifti, Axis, EnsembleConfig, Error,
    ForwardModelConfig, Mask, PhantomSpec, ReconstructionJob, TrainConfig, TrainOptions,
};

const EXIT_OTHER: u8 = 1;
const EXIT_IO: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "sair", version, about = "Self-supervised superresolution of anisotropic volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic phantom and its foreground mask.
    Phantom {
        #[arg(long, default_value_t = 96)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        ellipsoids: usize,
        #[arg(long, default_value_t = 0.05)]
        texture: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Blur, decimate and add noise along z.
    Simulate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network on one low-resolution volume.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to the spacing ratio of the input.
        #[arg(long)]
        r: Option<usize>,
        /// Noise added to synthesized training inputs.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        training: TrainingArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a low-resolution volume with a trained network.
    Predict {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long, default_value_t = 15)]
        n_pred: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Masked MSE (dB) and SSIM of a volume against a reference, as CSV.
    Evaluate {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Also write the CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resolution-ratio sweep on the phantom.
    SweepR {
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 3, 4, 5, 6])]
        r_values: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.035])]
        sigma_values: Vec<f64>,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Noise-level sweep on the phantom.
    SweepNoise {
        #[arg(long, value_delimiter = ',', default_values_t = vec![3])]
        r_values: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.035, 0.075, 0.15])]
        sigma_values: Vec<f64>,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Recompute every row of a sweep manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct TrainingArgs {
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Batches drawn per epoch [default: 3].
    #[arg(long, conflicts_with = "full_epochs")]
    batches_per_epoch: Option<usize>,
    /// Visit every training pair once per epoch.
    #[arg(long)]
    full_epochs: bool,
    /// Side of the random square training crops [default: 64].
    #[arg(long, conflicts_with = "full_slices")]
    patch: Option<usize>,
    /// Train on whole slices instead of crops.
    #[arg(long)]
    full_slices: bool,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 10)]
    n_train: usize,
}

impl TrainingArgs {
    fn options(&self) -> TrainOptions {
        let defaults = TrainOptions::default();
        TrainOptions {
            epochs: self.epochs,
            batch_size: self.batch_size,
            batches_per_epoch: if self.full_epochs {
                None
            } else {
                self.batches_per_epoch.or(defaults.batches_per_epoch)
            },
            patch_size: if self.full_slices { None } else { self.patch.or(defaults.patch_size) },
            learning_rate: self.learning_rate,
            ..defaults
        }
    }
}

#[derive(Args, Clone)]
struct SweepArgs {
    /// Realization seeds; `--seeds 1,2,3`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value_t = 96)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    phantom_seed: u64,
    #[arg(long, default_value_t = 15)]
    n_pred: usize,
    #[command(flatten)]
    training: TrainingArgs,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        EXIT_IO
    } else if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_OTHER
    }
}

fn save_manifest(output: &Path, command: &str, config: serde_json::Value, outputs: Vec<PathBuf>) -> sair::Result<()> {
    RunManifest::new(command, &config, outputs)?.save(manifest_path_for(output))
}

fn resolve_factor(x_lr: &sair::Volume, r: Option<usize>) -> usize {
    r.unwrap_or_else(|| factor_from_spacing(x_lr))
}

fn run(cli: Cli) -> sair::Result<()> {
    match cli.command {
        Command::Phantom { size, seed, ellipsoids, texture, out, mask_out } => {
            let spec = PhantomSpec {
                size,
                seed,
                n_ellipsoids: ellipsoids,
                texture_amplitude: texture,
            };
            let (gt, mask) = generate_phantom(&spec)?;
            write_nifti(&gt, &out)?;
            let mut outputs = vec![out.clone()];
            if let Some(m) = mask_out {
                write_nifti(&mask.to_volume(), &m)?;
                outputs.push(m);
            }
            save_manifest(&out, "phantom", json!({ "phantom": spec }), outputs)
        }
        Command::Simulate { input, r, sigma, seed, out } => {
            let gt = read_nifti(&input)?;
            let cfg = ForwardModelConfig::gaussian(r, sigma, seed);
            let lr = apply_forward_model(&gt, &cfg, Axis::Z)?;
            write_nifti(&lr, &out)?;
            save_manifest(
                &out,
                "simulate",
                json!({ "input": input, "forward_model": cfg, "axis": "z" }),
                vec![out.clone()],
            )
        }
        Command::Train { input, r, sigma, seed, training, out } => {
            let x_lr = read_nifti(&input)?;
            let r = resolve_factor(&x_lr, r);
            let (x_norm, scale) = normalize_intensities(&x_lr)?;
            let mut train_cfg = TrainConfig::new(r, sigma, seed);
            train_cfg.n_train = training.n_train;
            let opts = training.options();
            let (net, report) = train_on_volume(&x_norm, r, &train_cfg, &opts, seed)?;
            save_checkpoint(&net, &out)?;
            eprintln!("final loss {:.6e} after {} epochs", report.final_loss, report.epochs);
            save_manifest(
                &out,
                "train",
                json!({
                    "input": input,
                    "intensity_scale": [scale.low, scale.high],
                    "train_config": train_cfg,
                    "options": opts,
                    "seed": seed,
                    "report": report,
                }),
                vec![out.clone()],
            )
        }
        Command::Predict { input, net, r, n_pred, out } => {
            let x_lr = read_nifti(&input)?;
            let r = resolve_factor(&x_lr, r);
            let (x_norm, scale) = normalize_intensities(&x_lr)?;
            let ens_cfg = EnsembleConfig::with_members(n_pred);
            let job = ReconstructionJob {
                x_lr: x_norm,
                r,
                train_cfg: TrainConfig::new(r, 0.0, 0),
                ens_cfg: ens_cfg.clone(),
                net: load_checkpoint(&net)?,
                seed: 0,
            };
            let recon = scale.invert(&reconstruct(&job)?)?;
            write_nifti(&recon, &out)?;
            save_manifest(
                &out,
                "predict",
                json!({
                    "input": input,
                    "network": net,
                    "r": r,
                    "ensemble": ens_cfg,
                    "intensity_scale": [scale.low, scale.high],
                }),
                vec![out.clone()],
            )
        }
        Command::Evaluate { reference, input, mask, out } => {
            let test = read_nifti(&input)?;
            let mut gt = read_nifti(&reference)?;
            let mut m = match &mask {
                Some(p) => Mask::from_volume(&read_nifti(p)?, 0.5),
                None => Mask::full(gt.dims()),
            };
            // reconstructions may be shorter along z than the reference
            if test.dims() != gt.dims() {
                gt = gt.crop(test.dims())?;
                m = m.crop(test.dims())?;
            }
            let res = evaluate(&gt, &test, &m)?;
            let csv = format!(
                "mse_db,ssim,voxels\n{},{},{}\n",
                res.mse_db, res.ssim, res.voxels_evaluated
            );
            print!("{csv}");
            if let Some(path) = out {
                write_file(&path, csv.as_bytes())?;
                save_manifest(
                    &path,
                    "evaluate",
                    json!({ "reference": reference, "input": input, "mask": mask, "result": res }),
                    vec![path.clone()],
                )?;
            }
            Ok(())
        }
        Command::SweepR { r_values, sigma_values, sweep } => {
            sweep_command(SweepKind::Ratio, r_values, sigma_values, sweep)
        }
        Command::SweepNoise { r_values, sigma_values, sweep } => {
            sweep_command(SweepKind::Noise, r_values, sigma_values, sweep)
        }
        Command::Rerun { manifest, out } => {
            let m = SweepManifest::load(&manifest)?;
            let rows = replay(&m, threads_from_env())?;
            write_file(&out, &encode_csv(&rows)?)?;
            eprintln!("{} rows written to {}", rows.len(), out.display());
            Ok(())
        }
    }
}

fn sweep_command(kind: SweepKind, r_values: Vec<usize>, sigma_values: Vec<f64>, a: SweepArgs) -> sair::Result<()> {
    let default_seeds: Vec<u64> = match kind {
        SweepKind::Ratio => (1..=9).collect(),
        SweepKind::Noise => (1..=6).collect(),
    };
    let spec = SweepSpec {
        kind,
        r_values,
        sigma_values,
        seeds: a.seeds.unwrap_or(default_seeds),
        config: ExperimentConfig {
            phantom: PhantomSpec {
                size: a.size,
                seed: a.phantom_seed,
                ..PhantomSpec::default()
            },
            n_train: a.training.n_train,
            ensemble: EnsembleConfig::with_members(a.n_pred),
            train: a.training.options(),
        },
        output_dir: a.out,
    };
    let threads = threads_from_env();
    let outcome = run_sweep(&spec, threads)?;
    let failed = outcome.rows.iter().filter(|r| !r.status.starts_with("ok") && !r.status.starts_with("median")).count();
    eprintln!(
        "{} written ({} failed cells); manifest {}",
        outcome.csv_path.display(),
        failed,
        outcome.manifest_path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
