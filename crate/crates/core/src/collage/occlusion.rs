//! Paint-order occlusion accounting at integer-pixel resolution.
//!
//! A placement is covered only by placements painted after it. Visible
//! area is computed exactly by coordinate compression over the clipped
//! covering rects, so cost depends on box count, not box size.

use serde::{Deserialize, Serialize};

use crate::model::{Placement, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visibility {
    pub paint_order: u32,
    pub visible_px: u64,
    pub total_px: u64,
}

impl Visibility {
    pub fn visible_fraction(&self) -> f64 {
        self.visible_px as f64 / self.total_px as f64
    }

    pub fn passes(&self, tau: f64) -> bool {
        self.visible_fraction() > tau
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionReport {
    /// One entry per placement, ordered by paint order.
    pub entries: Vec<Visibility>,
    pub tau: f64,
}

impl OcclusionReport {
    /// True iff every placement keeps a visible fraction strictly above tau.
    pub fn satisfied(&self) -> bool {
        self.entries.iter().all(|v| v.passes(self.tau))
    }

    pub fn get(&self, paint_order: u32) -> Option<&Visibility> {
        self.entries.iter().find(|v| v.paint_order == paint_order)
    }
}

/// Area of `target` covered by the union of `covers`.
pub fn covered_area(target: &Rect, covers: &[Rect]) -> u64 {
    let clipped: Vec<Rect> = covers.iter().filter_map(|c| c.intersection(target)).collect();
    if clipped.is_empty() {
        return 0;
    }
    let mut xs: Vec<u64> = clipped.iter().flat_map(|r| [r.x() as u64, r.right()]).collect();
    let mut ys: Vec<u64> = clipped.iter().flat_map(|r| [r.y() as u64, r.bottom()]).collect();
    xs.sort_unstable();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();
    let mut area = 0;
    for xw in xs.windows(2) {
        for yw in ys.windows(2) {
            let inside = clipped.iter().any(|r| {
                r.x() as u64 <= xw[0] && xw[1] <= r.right() && r.y() as u64 <= yw[0] && yw[1] <= r.bottom()
            });
            if inside {
                area += (xw[1] - xw[0]) * (yw[1] - yw[0]);
            }
        }
    }
    area
}

/// Visible pixels of `target` given the rects painted on top of it.
pub fn visibility(target: &Placement, later: &[Rect]) -> Visibility {
    let total_px = target.dest.area();
    Visibility {
        paint_order: target.paint_order,
        visible_px: total_px - covered_area(&target.dest, later),
        total_px,
    }
}

pub fn check_occlusion(placements: &[Placement], tau: f64) -> OcclusionReport {
    let mut ordered: Vec<&Placement> = placements.iter().collect();
    ordered.sort_by_key(|p| p.paint_order);
    let entries = ordered
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let later: Vec<Rect> = ordered[i + 1..].iter().map(|q| q.dest).collect();
            visibility(p, &later)
        })
        .collect();
    OcclusionReport { entries, tau }
}
