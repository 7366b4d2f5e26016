use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("transform scale must be positive and finite, got {0}")]
    NonPositiveScale(f64),
    #[error("transform has non-finite components")]
    NonFinite,
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("buffer holds {actual} bytes, {width}x{height} {format:?} needs {expected}")]
    BufferSize {
        width: u32,
        height: u32,
        format: crate::image::PixelFormat,
        expected: usize,
        actual: usize,
    },
    #[error("channel index {0} out of range (RGB has channels 0..=2)")]
    InvalidChannel(usize),
    #[error("operation requires an RGB image")]
    NotRgb,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },
    #[error("{path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },
    #[error("png codec: {0}")]
    Codec(#[from] ::image::ImageError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("region bounding box has zero height")]
    ZeroHeight,
    #[error("region perimeter is zero")]
    ZeroPerimeter,
}

/// Pipeline stage at which landmark detection failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ImageLoad,
    SpineThreshold,
    C7IcExtraction,
    VerticalLineRemoval,
    ScriptRemoval,
    SfslRoi,
    FdRoi,
    FdPsis,
    FdToSfsl,
    XrayLabels,
    Validation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::ImageLoad => "image_load",
            Stage::SpineThreshold => "spine_threshold",
            Stage::C7IcExtraction => "c7_ic_extraction",
            Stage::VerticalLineRemoval => "vertical_line_removal",
            Stage::ScriptRemoval => "script_removal",
            Stage::SfslRoi => "sfsl_roi",
            Stage::FdRoi => "fd_roi",
            Stage::FdPsis => "fd_psis",
            Stage::FdToSfsl => "fd_to_sfsl",
            Stage::XrayLabels => "xray_labels",
            Stage::Validation => "validation",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionErrorKind {
    #[error("no spine pixels matched the spine color band")]
    NoSpineDetected,
    #[error("spine point list is empty")]
    EmptySpine,
    #[error("image has no non-background pixel")]
    EmptyRoi,
    #[error("degenerate region of interest")]
    DegenerateRoi,
    #[error("expected two PSIS marker regions, found {0}")]
    TooFewPsisMarkers(usize),
    #[error("expected 4 labeled discs, found {0}")]
    XrayLabelCount(usize),
    #[error("landmark invariant violated: {0}")]
    Invariant(String),
    #[error("{0}")]
    Image(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage}: {kind}")]
pub struct DetectionError {
    pub stage: Stage,
    pub kind: DetectionErrorKind,
}

impl DetectionError {
    pub fn new(stage: Stage, kind: DetectionErrorKind) -> Self {
        Self { stage, kind }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(String),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("least squares needs at least two point pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all source points coincide; similarity is rank deficient")]
    RankDeficient,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompositeError {
    #[error("image shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((u32, u32, crate::image::PixelFormat), (u32, u32, crate::image::PixelFormat)),
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("landmark {role} at ({x:.1}, {y:.1}) lies outside the {width}x{height} image")]
    OutOfBounds { role: &'static str, x: f64, y: f64, width: u32, height: u32 },
    #[error("source `{source_frame}` is not registered into target frame `{target}`")]
    Unregistered { source_frame: String, target: String },
}
