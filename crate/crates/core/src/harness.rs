//! Phantom experiments: resolution-ratio and noise sweeps written as CSV
//! tables with JSON manifests that replay every row.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TrainConfig;
use crate::error::{Error, Result};
use crate::fba::EnsembleConfig;
use crate::metrics::{evaluate, EvalResult};
use crate::nifti::write_atomic;
use crate::nn::TrainOptions;
use crate::operators::{apply_forward_model, ForwardModelConfig};
use crate::phantom::{generate_phantom, PhantomSpec};
use crate::pipeline::run_sair;
use crate::volume::{Axis, Mask, Volume};

pub const CSV_SCHEMA: &str = "sair-sweep/1";
pub const CSV_HEADER: [&str; 10] = [
    "kind",
    "r",
    "sigma",
    "seed",
    "mse_db_lr",
    "ssim_lr",
    "mse_db_sair",
    "ssim_sair",
    "wall_seconds",
    "status",
];

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "SAIR_THREADS";

/// Worker count from `SAIR_THREADS`, defaulting to the available cores.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` inside a dedicated pool of `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Noise-free training seed derived from a realization seed.
fn training_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Settings shared by every cell of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub phantom: PhantomSpec,
    pub n_train: usize,
    pub ensemble: EnsembleConfig,
    pub train: TrainOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomSpec::default(),
            n_train: 10,
            ensemble: EnsembleConfig::default(),
            train: TrainOptions::default(),
        }
    }
}

/// One `(r, sigma, seed)` cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub r: usize,
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    /// Cubic upsampling of the acquired volume vs ground truth.
    pub baseline: EvalResult,
    pub sair: EvalResult,
    pub wall_seconds: f64,
    pub final_loss: f64,
}

/// Simulates one acquisition of `gt`, reconstructs it and scores both the
/// cubic baseline and the reconstruction on the mask.
pub fn run_cell(gt: &Volume, mask: &Mask, cfg: &ExperimentConfig, cell: CellSpec) -> Result<CellMetrics> {
    let start = Instant::now();
    let acquisition = ForwardModelConfig::gaussian(cell.r, cell.sigma, cell.seed);
    let x_lr = apply_forward_model(gt, &acquisition, Axis::Z)?;
    let mut train_cfg = TrainConfig::new(cell.r, cell.sigma, training_seed(cell.seed));
    train_cfg.n_train = cfg.n_train;
    let run = run_sair(&x_lr, cell.r, &train_cfg, &cfg.ensemble, &cfg.train, cell.seed)?;
    let dims = run.reconstruction.dims();
    let gt_c = gt.crop(dims)?;
    let mask_c = mask.crop(dims)?;
    Ok(CellMetrics {
        baseline: evaluate(&gt_c, &run.upsampled, &mask_c)?,
        sair: evaluate(&gt_c, &run.reconstruction, &mask_c)?,
        wall_seconds: start.elapsed().as_secs_f64(),
        final_loss: run.report.final_loss,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Ratio,
    Noise,
}

impl SweepKind {
    pub fn file_stem(self) -> &'static str {
        match self {
            SweepKind::Ratio => "sweep_r",
            SweepKind::Noise => "sweep_noise",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub r_values: Vec<usize>,
    pub sigma_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub output_dir: PathBuf,
}

impl SweepSpec {
    /// `r` in 2..=6, one noise level, nine realizations.
    pub fn ratio_default(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind: SweepKind::Ratio,
            r_values: vec![2, 3, 4, 5, 6],
            sigma_values: vec![0.035],
            seeds: (1..=9).collect(),
            config: ExperimentConfig::default(),
            output_dir: output_dir.into(),
        }
    }

    /// Three noise levels at `r = 3`, six realizations.
    pub fn noise_default(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind: SweepKind::Noise,
            r_values: vec![3],
            sigma_values: vec![0.035, 0.075, 0.15],
            seeds: (1..=6).collect(),
            config: ExperimentConfig::default(),
            output_dir: output_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_values.is_empty() || self.sigma_values.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig("sweep lists must be non-empty".into()));
        }
        if self.r_values.iter().any(|&r| r < 1) {
            return Err(Error::InvalidConfig("r values must be >= 1".into()));
        }
        if self.sigma_values.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidConfig("sigma values must be >= 0".into()));
        }
        self.config.phantom.validate()?;
        self.config.ensemble.validate()?;
        self.config.train.validate()
    }

    pub fn cells(&self) -> Vec<CellSpec> {
        let mut cells = Vec::new();
        for &r in &self.r_values {
            for &sigma in &self.sigma_values {
                for &seed in &self.seeds {
                    cells.push(CellSpec { r, sigma, seed });
                }
            }
        }
        cells
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Cell,
    Median,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: RowKind,
    pub r: usize,
    pub sigma: f64,
    pub seed: Option<u64>,
    pub mse_db_lr: Option<f64>,
    pub ssim_lr: Option<f64>,
    pub mse_db_sair: Option<f64>,
    pub ssim_sair: Option<f64>,
    pub wall_seconds: Option<f64>,
    pub status: String,
}

impl SweepRow {
    fn from_cell(cell: CellSpec, outcome: &Result<CellMetrics>) -> Self {
        match outcome {
            Ok(m) => Self {
                kind: RowKind::Cell,
                r: cell.r,
                sigma: cell.sigma,
                seed: Some(cell.seed),
                mse_db_lr: Some(m.baseline.mse_db),
                ssim_lr: Some(m.baseline.ssim),
                mse_db_sair: Some(m.sair.mse_db),
                ssim_sair: Some(m.sair.ssim),
                wall_seconds: Some(m.wall_seconds),
                status: "ok".into(),
            },
            Err(e) => Self {
                kind: RowKind::Cell,
                r: cell.r,
                sigma: cell.sigma,
                seed: Some(cell.seed),
                mse_db_lr: None,
                ssim_lr: None,
                mse_db_sair: None,
                ssim_sair: None,
                wall_seconds: None,
                status: format!("error: {e}"),
            },
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn record(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        vec![
            match self.kind {
                RowKind::Cell => "cell".into(),
                RowKind::Median => "median".into(),
            },
            self.r.to_string(),
            format!("{}", self.sigma),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            f(self.mse_db_lr),
            f(self.ssim_lr),
            f(self.mse_db_sair),
            f(self.ssim_sair),
            f(self.wall_seconds),
            self.status.clone(),
        ]
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// One median row per `(r, sigma)` group over its successful cells.
pub fn median_rows(rows: &[SweepRow]) -> Vec<SweepRow> {
    let mut groups: Vec<(usize, f64)> = Vec::new();
    for row in rows.iter().filter(|r| r.kind == RowKind::Cell) {
        if !groups.contains(&(row.r, row.sigma)) {
            groups.push((row.r, row.sigma));
        }
    }
    groups
        .into_iter()
        .map(|(r, sigma)| {
            let members: Vec<&SweepRow> = rows
                .iter()
                .filter(|x| x.kind == RowKind::Cell && x.r == r && x.sigma == sigma && x.is_ok())
                .collect();
            let col = |get: fn(&SweepRow) -> Option<f64>| {
                median(&members.iter().filter_map(|m| get(m)).collect::<Vec<_>>())
            };
            SweepRow {
                kind: RowKind::Median,
                r,
                sigma,
                seed: None,
                mse_db_lr: col(|m| m.mse_db_lr),
                ssim_lr: col(|m| m.ssim_lr),
                mse_db_sair: col(|m| m.mse_db_sair),
                ssim_sair: col(|m| m.ssim_sair),
                wall_seconds: col(|m| m.wall_seconds),
                status: format!("median of {}", members.len()),
            }
        })
        .collect()
}

/// RFC 4180 table with the fixed [`CSV_HEADER`].
pub fn encode_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for row in rows {
        w.write_record(row.record()).map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Everything needed to recompute a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub tool: String,
    pub version: String,
    pub csv_schema: String,
    pub kind: SweepKind,
    pub config: ExperimentConfig,
    pub cells: Vec<CellSpec>,
    pub threads: usize,
}

impl SweepManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::Manifest(e.to_string()))?;
        write_atomic(path.as_ref(), text.as_bytes())
    }
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
}

/// Runs the given cells on one phantom with `threads` workers; the result
/// holds one row per cell in input order. Failed cells become flagged rows.
pub fn run_cells(
    config: &ExperimentConfig,
    cells: &[CellSpec],
    threads: usize,
) -> Result<Vec<SweepRow>> {
    let (gt, mask) = generate_phantom(&config.phantom)?;
    with_threads(threads, || {
        cells
            .par_iter()
            .map(|&cell| SweepRow::from_cell(cell, &run_cell(&gt, &mask, config, cell)))
            .collect()
    })
}

/// Runs a sweep and writes `<kind>.csv` and `<kind>.manifest.json` into the
/// output directory.
pub fn run_sweep(spec: &SweepSpec, threads: usize) -> Result<SweepOutcome> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.output_dir)?;
    let cells = spec.cells();
    let manifest = SweepManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        csv_schema: CSV_SCHEMA.into(),
        kind: spec.kind,
        config: spec.config.clone(),
        cells: cells.clone(),
        threads,
    };
    let stem = spec.kind.file_stem();
    let manifest_path = spec.output_dir.join(format!("{stem}.manifest.json"));
    manifest.save(&manifest_path)?;

    let mut rows = run_cells(&spec.config, &cells, threads)?;
    rows.extend(median_rows(&rows));
    let csv_path = spec.output_dir.join(format!("{stem}.csv"));
    write_atomic(&csv_path, &encode_csv(&rows)?)?;
    Ok(SweepOutcome {
        rows,
        csv_path,
        manifest_path,
    })
}

/// Recomputes the rows a manifest describes.
pub fn replay(manifest: &SweepManifest, threads: usize) -> Result<Vec<SweepRow>> {
    let mut rows = run_cells(&manifest.config, &manifest.cells, threads)?;
    rows.extend(median_rows(&rows));
    Ok(rows)
}

/// Sidecar manifest for single CLI commands.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, outputs: Vec<PathBuf>) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: serde_json::to_value(config).map_err(|e| Error::Manifest(e.to_string()))?,
            outputs,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::Manifest(e.to_string()))?;
        write_atomic(path.as_ref(), text.as_bytes())
    }
}

/// `out.nii` → `out.manifest.json`.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    output.with_file_name(format!("{stem}.manifest.json"))
}
