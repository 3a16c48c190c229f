use rand::Rng;
use serde::{Deserialize, Serialize};

use super::place::place_boxes;
use super::SynthesisConfig;
use crate::context::{resolve_detailed, ContextIndex};
use crate::error::{Error, Result};
use crate::model::{BoxLabel, CollagePlan, FrameRef, Mode, SubstrateCombo};
use crate::seed::{split_seed, stream_rng, Stream};
use crate::store::FrameStore;

/// Plans plus the bookkeeping a run manifest needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRun {
    pub plans: Vec<CollagePlan>,
    /// How many times the box pools were refilled.
    pub refills: u32,
    /// Box combos left out because no background shares any substrate code
    /// with them (matched mode only).
    pub unmatched_combos: Vec<SubstrateCombo>,
    /// Draws whose every box was skipped, so no plan was emitted.
    pub discarded_draws: u64,
}

impl PlanRun {
    pub fn total_skips(&self) -> usize {
        self.plans.iter().map(|p| p.skips.len()).sum()
    }
}

struct ActiveCombo<'a> {
    combo: SubstrateCombo,
    /// Background combo used in matched mode.
    target: Option<SubstrateCombo>,
    all_boxes: &'a [BoxLabel],
    pool: Vec<BoxLabel>,
}

/// Round-robin over box combos in canonical order. Each turn draws 1..=max_boxes
/// boxes from that combo's pool without replacement, picks a background and
/// places the boxes. Stops after the first full pass that reaches
/// `min_collages`. When every pool is empty the pools are refilled and the
/// epoch counter advances.
///
/// Draw `k` (counting discarded ones) uses `split_seed(master_seed, k)` as its
/// plan seed; box sampling, background choice and positions each use their
/// own stream of that seed, so the two modes sample identical box sequences.
pub fn plan_collages(index: &ContextIndex, store: &dyn FrameStore, cfg: &SynthesisConfig) -> Result<PlanRun> {
    cfg.validate()?;
    let available: Vec<SubstrateCombo> = index.background_combos().cloned().collect();
    let all_backgrounds = index.all_backgrounds();

    let mut unmatched_combos = Vec::new();
    let mut active: Vec<ActiveCombo<'_>> = Vec::new();
    for (combo, boxes) in index.boxes_by_combo() {
        if boxes.is_empty() {
            continue;
        }
        let target = match cfg.mode {
            Mode::Matched => match resolve_detailed(combo, &available) {
                Ok(r) if r.shared > 0 => Some(r.combo),
                Ok(_) | Err(Error::NoBackgrounds) => {
                    unmatched_combos.push(combo.clone());
                    continue;
                }
                Err(e) => return Err(e),
            },
            Mode::Random => None,
        };
        active.push(ActiveCombo {
            combo: combo.clone(),
            target,
            all_boxes: boxes,
            pool: boxes.clone(),
        });
    }

    if active.is_empty() || all_backgrounds.is_empty() {
        let why = match cfg.mode {
            Mode::Matched => "no box combo shares a substrate code with any background combo",
            Mode::Random => "need at least one background frame and one box",
        };
        return Err(Error::Unsatisfiable(why.into()));
    }

    let mut plans: Vec<CollagePlan> = Vec::new();
    let mut epoch: u32 = 0;
    let mut epoch_start = 0usize;
    let mut draw: u64 = 0;
    let mut discarded_draws = 0;

    loop {
        if active.iter().all(|a| a.pool.is_empty()) {
            if plans.len() == epoch_start {
                return Err(Error::Unsatisfiable(
                    "a full pass over every box produced no placeable collage".into(),
                ));
            }
            for a in &mut active {
                a.pool = a.all_boxes.to_vec();
            }
            epoch += 1;
            epoch_start = plans.len();
        }

        for a in &mut active {
            if a.pool.is_empty() {
                continue;
            }
            let seed = split_seed(cfg.master_seed, draw);
            draw += 1;

            let mut sampling = stream_rng(seed, Stream::Sampling);
            let r = sampling.random_range(1..=cfg.max_boxes);
            let mut chosen = Vec::with_capacity(r.min(a.pool.len()));
            for _ in 0..r.min(a.pool.len()) {
                let i = sampling.random_range(0..a.pool.len());
                chosen.push(a.pool.swap_remove(i));
            }

            let candidates: &[FrameRef] = match &a.target {
                Some(t) => index.backgrounds(t),
                None => &all_backgrounds,
            };
            let mut bg_rng = stream_rng(seed, Stream::Background);
            let background = candidates[bg_rng.random_range(0..candidates.len())].clone();
            let background_substrate = match &a.target {
                Some(t) => t.clone(),
                None => index
                    .bg_by_combo()
                    .iter()
                    .find(|(_, list)| list.binary_search(&background).is_ok())
                    .map(|(c, _)| c.clone())
                    .expect("every background is indexed under its combo"),
            };
            let dims = store.dims(&background).ok_or_else(|| Error::UnknownFrame {
                video_id: background.video_id.clone(),
                frame_index: background.frame_index,
            })?;

            let outcome = place_boxes(
                dims,
                &chosen,
                cfg.tau,
                cfg.max_place_attempts,
                split_seed(seed, Stream::Placement as u64),
            );
            if outcome.placements.is_empty() {
                discarded_draws += 1;
                continue;
            }
            plans.push(CollagePlan {
                plan_id: plans.len() as u64 + 1,
                seed,
                mode: cfg.mode,
                source_combo: a.combo.clone(),
                background,
                background_substrate,
                placements: outcome.placements,
                skips: outcome.skips,
                epoch,
            });
        }

        if plans.len() >= cfg.min_collages {
            break;
        }
    }

    Ok(PlanRun {
        plans,
        refills: epoch,
        unmatched_combos,
        discarded_draws,
    })
}
