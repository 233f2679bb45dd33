use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("not a single-file NIfTI-1 image (bad magic)")]
    BadMagic,

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("unsupported NIfTI dimension count {0}")]
    UnsupportedDimCount(i16),

    #[error("truncated NIfTI payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("volume is constant; intensities cannot be normalized")]
    ConstantVolume,

    #[error("kernel of length {len} is too long for an axis of length {dim}")]
    KernelTooLong { len: usize, dim: usize },

    #[error("factor {factor} exceeds axis length {dim}")]
    FactorTooLarge { factor: usize, dim: usize },

    #[error("axis of length {dim} is too short for cubic interpolation (need >= 4)")]
    AxisTooShort { dim: usize },

    #[error("in-plane rotation requires square dims, got {nx}x{ny}")]
    NonSquare { nx: usize, ny: usize },

    #[error("phantom size {0} is too small")]
    PhantomTooSmall(usize),

    #[error("training set is empty (every slice was excluded)")]
    EmptyTrainingSet,

    #[error("image of {rows}x{cols} is too small or odd-sized for the network")]
    ImageTooSmall { rows: usize, cols: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("fused volume kept an imaginary residue of {residue:e} (data range {range:e})")]
    ImaginaryResidue { residue: f64, range: f64 },

    #[error("mask selects no voxels")]
    EmptyMask,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("manifest: {0}")]
    Manifest(String),
}

impl Error {
    /// True for failures caused by numerical blow-up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. } | Error::NonFinite(_) | Error::ImaginaryResidue { .. }
        )
    }

    /// True for file-system and file-format failures.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::BadMagic
                | Error::UnsupportedDatatype(_)
                | Error::UnsupportedDimCount(_)
                | Error::TruncatedPayload { .. }
                | Error::Checkpoint(_)
                | Error::Manifest(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
