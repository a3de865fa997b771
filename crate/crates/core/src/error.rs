use std::path::PathBuf;

use thiserror::Error;

use crate::features::Channel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read image {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("degenerate image: all pixels share one intensity")]
    DegenerateImage,
    #[error("signature has no ink pixels")]
    EmptySignature,
    #[error("image is {kind:?}, operation requires {expected:?}")]
    WrongImageKind {
        kind: crate::corpus::ImageKind,
        expected: crate::corpus::ImageKind,
    },

    #[error("unknown corpus layout `{0}`")]
    UnknownLayout(String),
    #[error("corpus at {0} contains no signatures")]
    EmptyCorpus(PathBuf),
    #[error("duplicate manifest entry: writer {writer_id}, specimen {specimen}, {label}")]
    DuplicateEntry {
        writer_id: String,
        specimen: u32,
        label: crate::corpus::Label,
    },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),

    #[error("dimension mismatch on channel {channel}: expected {expected}, got {actual}")]
    DimMismatch {
        channel: Channel,
        expected: usize,
        actual: usize,
    },
    #[error("channel mismatch: {0} vs {1}")]
    ChannelMismatch(Channel, Channel),
    #[error("malformed feature record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("non-finite value in channel {0}")]
    NonFinite(Channel),
    #[error("invalid feature configuration: {0}")]
    InvalidFeatureConfig(String),

    #[error("cosine distance undefined for a zero vector")]
    ZeroVector,
    #[error("empty feature vector")]
    EmptyVector,
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("corpus holds {available} eligible genuine specimens, {requested} requested")]
    InsufficientCorpus { requested: usize, available: usize },
    #[error("missing channel {channel} for writer {writer_id} specimen {specimen}")]
    MissingChannel {
        channel: Channel,
        writer_id: String,
        specimen: u32,
    },
    #[error("universe model would hold {0} members, at least 2 are required")]
    UniverseTooSmall(usize),
    #[error("unsupported UBM schema version {found} (this build reads up to {supported})")]
    SchemaVersionMismatch { found: u32, supported: u32 },
    #[error("i/o failure on {path}: {reason}")]
    IoFailure { path: PathBuf, reason: String },
    #[error("unknown selection rule `{0}`")]
    UnknownSelectionRule(String),

    #[error("nearest-neighbour pool is empty")]
    EmptyPool,
    #[error("reference set holds {0} signature(s); at least 2 are required")]
    ReferenceSetTooSmall(usize),
    #[error("at least 2 samples are required to fit a Gaussian, got {0}")]
    TooFewSamples(usize),
    #[error("weights do not match the requested channels: {0}")]
    WeightMismatch(String),
    #[error("reference set is empty")]
    NoReferences,

    #[error("writer {writer_id} has {available} genuine specimens, needs more than {n_refs}")]
    InsufficientGenuine {
        writer_id: String,
        available: usize,
        n_refs: usize,
    },
    #[error("no impostor trials available for writer {0}")]
    InsufficientImpostors(String),
    #[error("score list is empty")]
    EmptyScores,
    #[error("features missing for writer {writer_id} specimen {specimen} ({label})")]
    MissingFeatures {
        writer_id: String,
        specimen: u32,
        label: crate::corpus::Label,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier used by the HTTP service.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnreadableFile { .. } => "UNREADABLE_FILE",
            Error::UnsupportedFormat(_) => "UNSUPPORTED_FORMAT",
            Error::DegenerateImage => "DEGENERATE_IMAGE",
            Error::EmptySignature => "EMPTY_SIGNATURE",
            Error::WrongImageKind { .. } => "WRONG_IMAGE_KIND",
            Error::UnknownLayout(_) => "UNKNOWN_LAYOUT",
            Error::EmptyCorpus(_) => "EMPTY_CORPUS",
            Error::DuplicateEntry { .. } => "DUPLICATE_ENTRY",
            Error::MalformedManifest(_) => "MALFORMED_MANIFEST",
            Error::DimMismatch { .. } => "DIM_MISMATCH",
            Error::ChannelMismatch(..) => "CHANNEL_MISMATCH",
            Error::MalformedRecord { .. } => "MALFORMED_RECORD",
            Error::NonFinite(_) => "NON_FINITE",
            Error::InvalidFeatureConfig(_) => "INVALID_FEATURE_CONFIG",
            Error::ZeroVector => "ZERO_VECTOR",
            Error::EmptyVector => "EMPTY_VECTOR",
            Error::UnknownMetric(_) => "UNKNOWN_METRIC",
            Error::InsufficientCorpus { .. } => "INSUFFICIENT_CORPUS",
            Error::MissingChannel { .. } => "MISSING_CHANNEL",
            Error::UniverseTooSmall(_) => "UNIVERSE_TOO_SMALL",
            Error::SchemaVersionMismatch { .. } => "SCHEMA_VERSION_MISMATCH",
            Error::IoFailure { .. } => "IO_FAILURE",
            Error::UnknownSelectionRule(_) => "UNKNOWN_SELECTION_RULE",
            Error::EmptyPool => "EMPTY_POOL",
            Error::ReferenceSetTooSmall(_) => "REFERENCE_SET_TOO_SMALL",
            Error::TooFewSamples(_) => "TOO_FEW_SAMPLES",
            Error::WeightMismatch(_) => "WEIGHT_MISMATCH",
            Error::NoReferences => "NO_REFERENCES",
            Error::InsufficientGenuine { .. } => "INSUFFICIENT_GENUINE",
            Error::InsufficientImpostors(_) => "INSUFFICIENT_IMPOSTORS",
            Error::EmptyScores => "EMPTY_SCORES",
            Error::MissingFeatures { .. } => "MISSING_FEATURES",
            Error::Io(_) => "IO_ERROR",
            Error::Json(_) => "JSON_ERROR",
        }
    }
}
