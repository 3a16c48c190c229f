//! Context-matched collage synthesis for partially annotated video frames.
//!
//! The pipeline runs ingestion → background mining → context indexing →
//! collage planning → compositing → dataset writing, and ships a COCO-style
//! evaluator for detections on the result.

pub mod collage;
pub mod context;
pub mod dataset_io;
pub mod error;
pub mod evaluation;
pub mod fixture;
pub mod ingest;
pub mod mining;
pub mod pipeline;
pub mod model;
pub mod png;
pub mod seed;
pub mod store;

pub use error::{Error, ErrorKind, Result};
