use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error for the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Velocity(#[from] VelocityError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Ordering(#[from] OrderingError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("lane {lane_id}: centerline needs at least 2 points, got {count}")]
    TooFewPoints { lane_id: u32, count: usize },
    #[error("lane {lane_id}: centerline points {index} and {next} coincide")]
    DegenerateSegment { lane_id: u32, index: usize, next: usize },
    #[error("lane {lane_id}: width must be positive and finite, got {width}")]
    BadWidth { lane_id: u32, width: f64 },
    #[error("lane {lane_id}: non-finite centerline coordinate")]
    NonFinite { lane_id: u32 },
    #[error("duplicate lane id {0}")]
    DuplicateLane(u32),
    #[error("lane map has no lanes")]
    EmptyMap,
    #[error("track {track_id}: dimensions must be strictly positive, got {length} x {width} x {height}")]
    BadDimensions { track_id: u64, length: f64, width: f64, height: f64 },
    #[error("track {track_id}: non-finite pose")]
    NonFinitePose { track_id: u64 },
    #[error("lane map JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VelocityError {
    #[error("velocity undefined: need at least 2 samples with distinct timestamps")]
    Undefined,
    #[error("smoothing coefficient must lie in (0, 1], got {0}")]
    BadSmoothing(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("format error: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct StreamError {
    pub line: usize,
    pub kind: StreamErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StreamErrorKind {
    #[error("read failed: {0}")]
    Io(String),
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("frame index {index} does not increase (previous {previous})")]
    FrameIndex { previous: u64, index: u64 },
    #[error("timestamp {t} decreases (previous {previous})")]
    Timestamp { previous: f64, t: f64 },
    #[error("timestamp gap {delta} s exceeds 10x the nominal period {period} s")]
    TimestampGap { delta: f64, period: f64 },
    #[error("duplicate track id {0} in frame")]
    DuplicateTrack(u64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("observation: {0}")]
    Observation(String),
}

/// A frame or observation arrived out of order.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{context}: frame {index} arrived after frame {previous}")]
pub struct OrderingError {
    pub context: String,
    pub previous: u64,
    pub index: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field} must be {expected}, got {value}")]
    Invalid { field: &'static str, expected: &'static str, value: f64 },
    #[error("config parse: {0}")]
    Parse(String),
}
