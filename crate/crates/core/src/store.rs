//! Read-only access to frame images.

use std::collections::HashMap;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::ingest::FrameEntry;
use crate::model::{FrameKey, FrameRef};
use crate::png::load_png;

/// Source of frame dimensions and pixels. Implementations must be safe to
/// share across rendering workers.
pub trait FrameStore: Sync {
    fn dims(&self, frame: &FrameRef) -> Option<(u32, u32)>;

    fn load(&self, frame: &FrameRef) -> Result<RgbImage>;
}

fn unknown(frame: &FrameRef) -> Error {
    Error::UnknownFrame {
        video_id: frame.video_id.clone(),
        frame_index: frame.frame_index,
    }
}

/// Frames on disk as listed in a frames manifest.
#[derive(Debug, Clone, Default)]
pub struct DiskFrameStore {
    entries: HashMap<FrameKey, FrameEntry>,
}

impl DiskFrameStore {
    pub fn new(entries: &[FrameEntry]) -> Self {
        DiskFrameStore {
            entries: entries.iter().map(|e| (e.frame.key(), e.clone())).collect(),
        }
    }

    pub fn entry(&self, frame: &FrameRef) -> Option<&FrameEntry> {
        self.entries.get(&frame.key())
    }
}

impl FrameStore for DiskFrameStore {
    fn dims(&self, frame: &FrameRef) -> Option<(u32, u32)> {
        self.entry(frame).map(|e| (e.width, e.height))
    }

    fn load(&self, frame: &FrameRef) -> Result<RgbImage> {
        let entry = self.entry(frame).ok_or_else(|| unknown(frame))?;
        let img = load_png(&entry.image_path)?;
        if img.dimensions() != (entry.width, entry.height) {
            return Err(Error::DimensionMismatch {
                path: entry.image_path.clone(),
                expected_w: entry.width,
                expected_h: entry.height,
                actual_w: img.width(),
                actual_h: img.height(),
            });
        }
        Ok(img)
    }
}

/// In-memory store, mostly for tests and small tools.
#[derive(Debug, Clone, Default)]
pub struct MemoryFrameStore {
    images: HashMap<FrameKey, RgbImage>,
}

impl MemoryFrameStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame: &FrameRef, image: RgbImage) {
        self.images.insert(frame.key(), image);
    }
}

impl FrameStore for MemoryFrameStore {
    fn dims(&self, frame: &FrameRef) -> Option<(u32, u32)> {
        self.images.get(&frame.key()).map(|i| i.dimensions())
    }

    fn load(&self, frame: &FrameRef) -> Result<RgbImage> {
        self.images.get(&frame.key()).cloned().ok_or_else(|| unknown(frame))
    }
}
