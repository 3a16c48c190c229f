use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("substrate combo is empty after trimming and deduplication")]
    EmptyCombo,

    #[error("invalid substrate code {0:?}: codes may not contain '+', ';' or ','")]
    InvalidSubstrateCode(String),

    #[error("invalid rect {x},{y} {w}x{h}: width and height must be at least 1")]
    InvalidRect { x: i64, y: i64, w: i64, h: i64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("overlapping substrate intervals in video {video_id}: [{first_start}, {first_end}) and [{second_start}, {second_end})")]
    Overlap {
        video_id: String,
        first_start: u64,
        first_end: u64,
        second_start: u64,
        second_end: u64,
    },

    #[error("box {box_id} references frame {video_id}#{frame_index} which has no image file")]
    MissingFrameImage {
        box_id: u64,
        video_id: String,
        frame_index: u64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: image is {actual_w}x{actual_h} but the manifest declares {expected_w}x{expected_h}")]
    DimensionMismatch {
        path: PathBuf,
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
    },

    #[error("frame {video_id}#{frame_index} is not in the frame store")]
    UnknownFrame { video_id: String, frame_index: u64 },

    #[error("box {box_id} is labeled {labeled} but its frame's substrate is {resolved}")]
    SubstrateMismatch {
        box_id: u64,
        labeled: String,
        resolved: String,
    },

    #[error("plan references unknown box id {0}")]
    UnknownBox(u64),

    #[error("no background combos available")]
    NoBackgrounds,

    #[error("unsatisfiable: {0}")]
    Unsatisfiable(String),

    #[error("duplicate plan id {0}")]
    DuplicatePlanId(u64),

    #[error("species {name:?} has conflicting category metadata: {left} vs {right}")]
    SpeciesMismatch {
        name: String,
        left: String,
        right: String,
    },

    #[error("vocabulary mismatch: species {0:?} does not appear in the ground-truth categories")]
    VocabularyMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Broad category, used by front ends to pick exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::EmptyCombo
            | Error::InvalidSubstrateCode(_)
            | Error::InvalidRect { .. }
            | Error::Parse { .. }
            | Error::Overlap { .. }
            | Error::UnknownFrame { .. }
            | Error::UnknownBox(_)
            | Error::SubstrateMismatch { .. }
            | Error::DuplicatePlanId(_) => ErrorKind::Parse,
            Error::Io { .. }
            | Error::Image { .. }
            | Error::DimensionMismatch { .. }
            | Error::MissingFrameImage { .. } => ErrorKind::Io,
            Error::NoBackgrounds | Error::Unsatisfiable(_) => ErrorKind::Unsatisfiable,
            Error::SpeciesMismatch { .. } | Error::VocabularyMismatch(_) => ErrorKind::Vocabulary,
            Error::InvalidConfig(_) => ErrorKind::Config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Io,
    Unsatisfiable,
    Vocabulary,
    Config,
}
