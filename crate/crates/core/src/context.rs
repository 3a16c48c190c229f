//! Substrate context index: backgrounds and boxes grouped by substrate
//! combo, plus nearest-combo resolution for combos with no exact match.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::ingest::{SubstrateInterval, SubstrateTrack};
use crate::model::{BoxLabel, FrameRef, SubstrateCombo};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContextIndex {
    bg_by_combo: BTreeMap<SubstrateCombo, Vec<FrameRef>>,
    boxes_by_combo: BTreeMap<SubstrateCombo, Vec<BoxLabel>>,
}

/// Partitions backgrounds and boxes by substrate combo. Every box must
/// already carry its frame's combo.
pub fn build_index(
    backgrounds: &[FrameRef],
    boxes: &[BoxLabel],
    substrate: &[SubstrateInterval],
) -> Result<ContextIndex> {
    let track = SubstrateTrack::new(substrate)?;
    let mut bg_by_combo: BTreeMap<SubstrateCombo, Vec<FrameRef>> = BTreeMap::new();
    for f in backgrounds {
        bg_by_combo.entry(track.combo_of(f)).or_default().push(f.clone());
    }
    let mut boxes_by_combo: BTreeMap<SubstrateCombo, Vec<BoxLabel>> = BTreeMap::new();
    for b in boxes {
        let resolved = track.combo_of(&b.frame);
        if resolved != b.substrate {
            return Err(Error::SubstrateMismatch {
                box_id: b.id,
                labeled: b.substrate.as_canonical(),
                resolved: resolved.as_canonical(),
            });
        }
        boxes_by_combo.entry(resolved).or_default().push(b.clone());
    }
    for list in bg_by_combo.values_mut() {
        list.sort();
    }
    for list in boxes_by_combo.values_mut() {
        list.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }
    Ok(ContextIndex {
        bg_by_combo,
        boxes_by_combo,
    })
}

impl ContextIndex {
    pub fn backgrounds(&self, combo: &SubstrateCombo) -> &[FrameRef] {
        self.bg_by_combo.get(combo).map_or(&[], Vec::as_slice)
    }

    pub fn boxes(&self, combo: &SubstrateCombo) -> &[BoxLabel] {
        self.boxes_by_combo.get(combo).map_or(&[], Vec::as_slice)
    }

    pub fn bg_by_combo(&self) -> &BTreeMap<SubstrateCombo, Vec<FrameRef>> {
        &self.bg_by_combo
    }

    pub fn boxes_by_combo(&self) -> &BTreeMap<SubstrateCombo, Vec<BoxLabel>> {
        &self.boxes_by_combo
    }

    /// Combos that have at least one background frame, in canonical order.
    pub fn background_combos(&self) -> impl Iterator<Item = &SubstrateCombo> {
        self.bg_by_combo.iter().filter(|(_, v)| !v.is_empty()).map(|(k, _)| k)
    }

    /// Every background frame, in (video_id, frame_index) order.
    pub fn all_backgrounds(&self) -> Vec<FrameRef> {
        let mut all: Vec<FrameRef> = self.bg_by_combo.values().flatten().cloned().collect();
        all.sort();
        all
    }

    pub fn n_backgrounds(&self) -> usize {
        self.bg_by_combo.values().map(Vec::len).sum()
    }

    pub fn n_boxes(&self) -> usize {
        self.boxes_by_combo.values().map(Vec::len).sum()
    }

    /// `(combo, n_backgrounds, n_boxes)` for every combo seen on either side.
    pub fn stats(&self) -> Vec<(SubstrateCombo, usize, usize)> {
        let mut keys: Vec<&SubstrateCombo> = self.bg_by_combo.keys().chain(self.boxes_by_combo.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|k| (k.clone(), self.backgrounds(k).len(), self.boxes(k).len()))
            .collect()
    }

    /// Writes [`ContextIndex::stats`] as `combo,n_backgrounds,n_boxes` CSV.
    pub fn write_stats<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["combo", "n_backgrounds", "n_boxes"])?;
        for (combo, n_bg, n_boxes) in self.stats() {
            w.write_record([combo.as_canonical(), n_bg.to_string(), n_boxes.to_string()])?;
        }
        w.flush()
    }
}

/// Resolution of a query combo against the available background combos.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub combo: SubstrateCombo,
    /// |query ∩ combo|
    pub shared: usize,
    /// |query ∪ combo|
    pub union: usize,
}

impl Resolution {
    pub fn is_exact(&self) -> bool {
        self.shared == self.union
    }

    pub fn jaccard(&self) -> f64 {
        self.shared as f64 / self.union as f64
    }
}

/// Returns `query` when available, otherwise the available combo with the
/// highest Jaccard similarity; ties go to the smaller canonical string.
pub fn resolve_combo<'a, I>(query: &SubstrateCombo, available: I) -> Result<SubstrateCombo>
where
    I: IntoIterator<Item = &'a SubstrateCombo>,
{
    resolve_detailed(query, available).map(|r| r.combo)
}

pub fn resolve_detailed<'a, I>(query: &SubstrateCombo, available: I) -> Result<Resolution>
where
    I: IntoIterator<Item = &'a SubstrateCombo>,
{
    let mut best: Option<Resolution> = None;
    for cand in available {
        let (shared, union) = query.overlap_counts(cand);
        let better = match &best {
            None => true,
            Some(b) => {
                // compare shared/union as exact fractions
                let lhs = shared as u64 * b.union as u64;
                let rhs = b.shared as u64 * union as u64;
                lhs > rhs || (lhs == rhs && *cand < b.combo)
            }
        };
        if better {
            best = Some(Resolution {
                combo: cand.clone(),
                shared,
                union,
            });
        }
    }
    best.ok_or(Error::NoBackgrounds)
}
