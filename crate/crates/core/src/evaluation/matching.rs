use std::cmp::Ordering;

use super::{iou_parts, Threshold};
use crate::error::Result;
use crate::model::{Detection, Rect};

/// Outcome for one detection, in processing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionMatch {
    /// Index into the input detections.
    pub det: usize,
    /// Matched ground-truth index, or None for a false positive.
    pub gt: Option<usize>,
}

impl DetectionMatch {
    pub fn is_tp(&self) -> bool {
        self.gt.is_some()
    }
}

/// Processing order: score descending, ties by lower x then lower y, then input order.
pub(crate) fn score_order(dets: &[(Rect, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, sa) = dets[a];
        let (rb, sb) = dets[b];
        sb.total_cmp(&sa).then(ra.x().cmp(&rb.x())).then(ra.y().cmp(&rb.y()))
    });
    order
}

/// Greedy matching of scored rects against `gts`. Each detection takes the
/// unmatched GT with the highest IoU at or above `t` (ties to the lower GT
/// index). Results come back in processing order.
pub fn match_greedy(dets: &[(Rect, f64)], gts: &[Rect], t: Threshold) -> Vec<DetectionMatch> {
    let mut taken = vec![false; gts.len()];
    score_order(dets)
        .into_iter()
        .map(|i| {
            let mut best: Option<(usize, u64, u64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if taken[j] {
                    continue;
                }
                let (inter, union) = iou_parts(&dets[i].0, g);
                if inter == 0 || !t.admits(inter, union) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((_, bi, bu)) => {
                        (inter as u128 * bu as u128).cmp(&(bi as u128 * union as u128)) == Ordering::Greater
                    }
                };
                if better {
                    best = Some((j, inter, union));
                }
            }
            let gt = best.map(|(j, _, _)| j);
            if let Some(j) = gt {
                taken[j] = true;
            }
            DetectionMatch { det: i, gt }
        })
        .collect()
}

/// Matches detections of a single class on a single frame.
pub fn match_detections(dets: &[Detection], gts: &[Rect], thresh: f64) -> Result<Vec<DetectionMatch>> {
    let t = Threshold::from_fraction(thresh)?;
    let scored: Vec<(Rect, f64)> = dets.iter().map(|d| (d.rect, d.score)).collect();
    Ok(match_greedy(&scored, gts, t))
}
