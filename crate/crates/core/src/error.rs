use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed WAV header in {path}: {reason}")]
    MalformedWav { path: PathBuf, reason: String },
    #[error("unsupported audio encoding in {path}: {reason}")]
    UnsupportedCodec { path: PathBuf, reason: String },
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("invalid feature configuration: {0}")]
    InvalidFeatureConfig(String),
    #[error("waveform has {samples} samples, shorter than one {window}-sample window")]
    WaveformTooShort { samples: usize, window: usize },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward called on a tape that was already differentiated")]
    TapeConsumed,
    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("optimizer state does not match the parameter set: {0}")]
    MisalignedState(String),

    #[error("invalid model configuration: {0}")]
    InvalidModelConfig(String),
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("segment [{start}, {end}) is invalid for {frames} frames")]
    InvalidSpan { start: usize, end: usize, frames: usize },
    #[error("segment count {k} out of range for {frames} frames")]
    SegmentCountOutOfRange { k: usize, frames: usize },
    #[error("brute force limited to {max} frames, got {frames}")]
    TooManyFrames { frames: usize, max: usize },
    #[error("model has no {0} head")]
    MissingHead(&'static str),

    #[error("class label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("phoneme sequence has {phonemes} symbols for {segments} segments")]
    PhonemeCountMismatch { phonemes: usize, segments: usize },
    #[error("invalid training setup: {0}")]
    InvalidTraining(String),

    #[error("boundary lists must be sorted ascending")]
    UnsortedBoundaries,
    #[error("inconsistent counts: {hits} hits with {n_pred} predicted and {n_ref} reference boundaries")]
    InconsistentCounts { hits: usize, n_pred: usize, n_ref: usize },
    #[error("R-value undefined for zero precision")]
    ZeroPrecision,
    #[error("utterance keys differ between predictions and references: {0}")]
    KeyMismatch(String),

    #[error("annotation {path}: {reason}")]
    Annotation { path: PathBuf, reason: String },
    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("{path}: sample rate {found} Hz, expected {expected} Hz")]
    SampleRateMismatch { path: PathBuf, found: u32, expected: u32 },
    #[error("empty data set: {0}")]
    EmptyData(String),

    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("feature dump: {0}")]
    DumpFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    /// Coarse classification used by front ends to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            MissingFile(_) | MalformedWav { .. } | UnsupportedCodec { .. } | InvalidWaveform(_)
            | WaveformTooShort { .. } | Annotation { .. } | Manifest { .. }
            | SampleRateMismatch { .. } | EmptyData(_) | KeyMismatch(_) | ModelFormat(_)
            | DumpFormat(_) | PhonemeCountMismatch { .. } | InvalidSegmentation(_) | Io(_) => {
                ErrorKind::Data
            }
            InvalidFeatureConfig(_) | InvalidModelConfig(_) | InvalidTraining(_) => ErrorKind::Config,
            _ => ErrorKind::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}
