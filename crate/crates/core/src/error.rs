use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown emotion token {0:?}")]
    UnknownEmotion(String),

    #[error("unknown emotion token {token:?} in {}", .path.display())]
    UnknownEmotionIn { path: PathBuf, token: String },

    #[error("unknown group class {0:?}")]
    UnknownGroupClass(String),

    #[error("empty label histogram: no faces placed")]
    EmptyHistogram,

    #[error("failed to read {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode image {}: {source}", .path.display())]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("image encoding failed: {0}")]
    Encode(#[from] image::ImageError),

    #[error("invalid catalog: {0}")]
    Catalog(String),

    #[error("no uniform background detected")]
    NoUniformBackground,

    #[error("no foreground detected")]
    EmptyForeground,

    #[error("degenerate augmentation: face extent {width}x{height} below minimum {min}x{min}")]
    DegenerateAugmentation { width: u32, height: u32, min: u32 },

    #[error("frame {width}x{height} too small for a {crop}x{crop} crop")]
    FrameTooSmall { width: u32, height: u32, crop: u32 },

    #[error("scene overcrowded: could not place {faces} face(s)")]
    Overcrowded { faces: usize },

    #[error("missing asset {0:?}")]
    MissingAsset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid video index: {0}")]
    VideoIndex(String),

    #[error("frame index {index} out of range for video {video} with {frame_count} frames")]
    FrameOutOfRange {
        video: String,
        index: u64,
        frame_count: u64,
    },

    #[error("failed to decode frame {index} of video {video}: {reason}")]
    FrameDecode {
        video: String,
        index: u64,
        reason: String,
    },

    #[error("invalid predictions: {0}")]
    Predictions(String),

    #[error("invalid score series: {0}")]
    ScoreSeries(String),

    #[error("dataset sink failed after {written} scene(s): {reason}")]
    Sink { written: usize, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
