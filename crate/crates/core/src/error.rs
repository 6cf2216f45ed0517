use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("normal is parallel to the base y-axis{}", index_suffix(*.index))]
    DegenerateNormal { index: Option<usize> },
    #[error("point lies behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("too few points: need more than {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("no correspondences survived the distance gate")]
    NoCorrespondences,
    #[error("malformed landmarks: {0}")]
    MalformedLandmarks(String),
    #[error("segment is empty")]
    EmptySegment,
    #[error("strip normal is degenerate with respect to the camera axis")]
    DegenerateObliquity,
    #[error("no surface within sensor range")]
    NoSurfaceInRange,
    #[error("contact: separation {distance} m")]
    Contact { distance: f64 },
    #[error("run aborted on safety at t = {time} s: {reason}")]
    AbortedOnSafety { time: f64, reason: String },
    #[error("shot log is empty")]
    EmptyLog,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn index_suffix(index: Option<usize>) -> String {
    match index {
        Some(i) => format!(" (path point {i})"),
        None => String::new(),
    }
}
