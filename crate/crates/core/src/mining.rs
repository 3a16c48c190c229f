//! Background mining: drop every frame within a time buffer of any CABOF
//! label of the same video.

use std::collections::HashMap;

use crate::ingest::FrameEntry;
use crate::model::{CabofLabel, FrameRef, Timestamp};

pub const DEFAULT_BUFFER_MS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiningConfig {
    pub buffer_ms: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            buffer_ms: DEFAULT_BUFFER_MS,
        }
    }
}

impl AsRef<FrameRef> for FrameRef {
    fn as_ref(&self) -> &FrameRef {
        self
    }
}

impl AsRef<FrameRef> for FrameEntry {
    fn as_ref(&self) -> &FrameRef {
        &self.frame
    }
}

/// Merged closed removal windows `[t - buffer, t + buffer]`, per video.
#[derive(Debug, Clone, Default)]
pub struct RemovalWindows {
    by_video: HashMap<String, Vec<(u64, u64)>>,
}

impl RemovalWindows {
    pub fn new(cabof: &[CabofLabel], cfg: MiningConfig) -> Self {
        let mut stamps: HashMap<String, Vec<u64>> = HashMap::new();
        for c in cabof {
            stamps.entry(c.video_id.clone()).or_default().push(c.timestamp.millis());
        }
        let by_video = stamps
            .into_iter()
            .map(|(video, mut ts)| {
                ts.sort_unstable();
                let mut merged: Vec<(u64, u64)> = Vec::new();
                for t in ts {
                    let (lo, hi) = (t.saturating_sub(cfg.buffer_ms), t.saturating_add(cfg.buffer_ms));
                    match merged.last_mut() {
                        // closed intervals touching at a point still merge
                        Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                        _ => merged.push((lo, hi)),
                    }
                }
                (video, merged)
            })
            .collect();
        RemovalWindows { by_video }
    }

    pub fn windows(&self, video_id: &str) -> &[(u64, u64)] {
        self.by_video.get(video_id).map_or(&[], Vec::as_slice)
    }

    pub fn removes(&self, video_id: &str, t: Timestamp) -> bool {
        let ws = self.windows(video_id);
        let t = t.millis();
        let idx = ws.partition_point(|&(lo, _)| lo <= t);
        idx > 0 && t <= ws[idx - 1].1
    }
}

/// Frames whose timestamp lies outside every removal window of their video,
/// in input order.
pub fn mine_backgrounds<F>(frames: &[F], cabof: &[CabofLabel], cfg: MiningConfig) -> Vec<F>
where
    F: AsRef<FrameRef> + Clone,
{
    let windows = RemovalWindows::new(cabof, cfg);
    frames
        .iter()
        .filter(|f| {
            let f = f.as_ref();
            !windows.removes(&f.video_id, f.timestamp)
        })
        .cloned()
        .collect()
}
