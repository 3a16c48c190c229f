use rand::Rng;
use serde::{Deserialize, Serialize};

use super::occlusion::visibility;
use crate::model::{BoxLabel, Placement, Rect, Skip, SkipReason};
use crate::seed::rng;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementOutcome {
    pub placements: Vec<Placement>,
    pub skips: Vec<Skip>,
}

/// Does adding `candidate` on top of `placed` keep every box above `tau`?
/// Only boxes the candidate touches can change, so only those are rechecked.
fn accepts(placed: &[Placement], candidate: &Placement, tau: f64) -> bool {
    placed.iter().enumerate().all(|(i, p)| {
        if p.dest.intersection(&candidate.dest).is_none() {
            return true;
        }
        let later: Vec<Rect> = placed[i + 1..]
            .iter()
            .map(|q| q.dest)
            .chain(std::iter::once(candidate.dest))
            .collect();
        visibility(p, &later).passes(tau)
    })
}

/// Pastes `boxes` in order at uniformly drawn positions fully inside the
/// background. A position that would push any earlier box to a visible
/// fraction at or below `tau` is redrawn up to `attempts` times before the
/// box is skipped. Boxes larger than the background are skipped outright.
pub fn place_boxes(
    background_dims: (u32, u32),
    boxes: &[BoxLabel],
    tau: f64,
    attempts: u32,
    rng_seed: u64,
) -> PlacementOutcome {
    let (bw, bh) = background_dims;
    let mut r = rng(rng_seed);
    let mut out = PlacementOutcome::default();
    for b in boxes {
        let (w, h) = (b.rect.w(), b.rect.h());
        if w > bw || h > bh {
            out.skips.push(Skip {
                box_id: b.id,
                reason: SkipReason::TooLarge,
            });
            continue;
        }
        let mut accepted = None;
        for _ in 0..=attempts {
            let x = r.random_range(0..=bw - w);
            let y = r.random_range(0..=bh - h);
            let candidate = Placement {
                source_box_id: b.id,
                dest: b.rect.moved_to(x, y),
                paint_order: out.placements.len() as u32,
            };
            if accepts(&out.placements, &candidate, tau) {
                accepted = Some(candidate);
                break;
            }
        }
        match accepted {
            Some(p) => out.placements.push(p),
            None => out.skips.push(Skip {
                box_id: b.id,
                reason: SkipReason::Occluded,
            }),
        }
    }
    out
}
