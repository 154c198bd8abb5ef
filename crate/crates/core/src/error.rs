use std::path::PathBuf;

use crate::volume::{Dims, UnitState};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no pixel data in {0}")]
    MissingPixelData(PathBuf),
    #[error("inconsistent slice geometry: {0}")]
    InconsistentSliceGeometry(String),
    #[error("unsupported transfer syntax `{0}`")]
    UnsupportedTransferSyntax(String),
    #[error("unsupported pixel format: {0}")]
    UnsupportedPixelFormat(String),
    #[error("duplicate slice position {0}")]
    DuplicateSlicePosition(f64),
    #[error("malformed DICOM at byte {offset}: {reason}")]
    MalformedDicom { offset: usize, reason: String },
    #[error("no matching DICOM slices in {0}")]
    EmptySeries(PathBuf),

    #[error("cannot parse {path}: {reason}")]
    HeaderParseError { path: PathBuf, reason: String },
    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    PayloadLengthMismatch { expected: usize, found: usize },
    #[error("probability {value} at voxel {index} outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f32 },
    #[error("value {value} at voxel {index} is not representable as {element}")]
    UnrepresentableValue {
        index: usize,
        value: f64,
        element: &'static str,
    },
    #[error("slice {index} out of range for depth {depth}")]
    SliceOutOfRange { index: usize, depth: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image encoding failed: {0}")]
    ImageEncode(String),

    #[error("volume is {found:?}, expected {expected:?}")]
    WrongUnitState { expected: UnitState, found: UnitState },
    #[error("minimum voxel magnitude is zero")]
    DegenerateMinimum,
    #[error("empty input")]
    EmptyInput,
    #[error("zero variance")]
    ZeroVariance,
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimsMismatch(Dims, Dims),
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),

    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("subset search drew no samples")]
    EmptySample,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("lung masks are empty")]
    EmptyLungs,
    #[error("left and right lung masks overlap")]
    OverlappingLungs,
    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),

    #[error("panel has {found} masks, expected {expected}")]
    PanelSizeMismatch { expected: usize, found: usize },
    #[error("empty panel")]
    EmptyPanel,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 raters, found {0}")]
    InsufficientRaters(usize),
    #[error("invalid study: {0}")]
    InvalidStudy(String),

    #[error("invalid phantom spec: {0}")]
    SpecInvalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn header(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::HeaderParseError {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable name of the error category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::MissingPixelData(_) => "MissingPixelData",
            Error::InconsistentSliceGeometry(_) => "InconsistentSliceGeometry",
            Error::UnsupportedTransferSyntax(_) => "UnsupportedTransferSyntax",
            Error::UnsupportedPixelFormat(_) => "UnsupportedPixelFormat",
            Error::DuplicateSlicePosition(_) => "DuplicateSlicePosition",
            Error::MalformedDicom { .. } => "MalformedDicom",
            Error::EmptySeries(_) => "EmptySeries",
            Error::HeaderParseError { .. } => "HeaderParseError",
            Error::PayloadLengthMismatch { .. } => "PayloadLengthMismatch",
            Error::ProbabilityOutOfRange { .. } => "ProbabilityOutOfRange",
            Error::UnrepresentableValue { .. } => "UnrepresentableValue",
            Error::SliceOutOfRange { .. } => "SliceOutOfRange",
            Error::Io { .. } => "IoFailure",
            Error::ImageEncode(_) => "IoFailure",
            Error::WrongUnitState { .. } => "WrongUnitState",
            Error::DegenerateMinimum => "DegenerateMinimum",
            Error::EmptyInput => "EmptyInput",
            Error::ZeroVariance => "ZeroVariance",
            Error::DimsMismatch(..) => "DimsMismatch",
            Error::UnknownFamily(_) => "UnknownFamily",
            Error::EmptyEnsemble => "EmptyEnsemble",
            Error::EmptySample => "EmptySample",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptyLungs => "EmptyLungs",
            Error::OverlappingLungs => "OverlappingLungs",
            Error::DegenerateLabels(_) => "DegenerateLabels",
            Error::PanelSizeMismatch { .. } => "PanelSizeMismatch",
            Error::EmptyPanel => "EmptyPanel",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::InsufficientRaters(_) => "InsufficientRaters",
            Error::InvalidStudy(_) => "InvalidStudy",
            Error::SpecInvalid(_) => "SpecInvalid",
        }
    }

    /// Process exit code: 2 validation, 3 I/O, 4 internal invariant breach.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::ImageEncode(_) => 3,
            Error::UnrepresentableValue { .. } => 4,
            _ => 2,
        }
    }
}
