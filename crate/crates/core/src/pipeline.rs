//! End-to-end synthesis: load → mine → index → plan → render → write.

use std::collections::BTreeSet;

use crate::collage::{plan_collages, render_plans, CropBank, PlanRun, SynthesisConfig};
use crate::context::{build_index, ContextIndex};
use crate::dataset_io::{export_original, merge_manifests, CocoDataset, DatasetWriter, OutputLayout, WriteSummary};
use crate::error::Result;
use crate::ingest::{load_dataset, Dataset, DatasetRoot, FrameEntry};
use crate::mining::{mine_backgrounds, MiningConfig};
use crate::store::DiskFrameStore;

/// Everything a synthesis run produced, minus the pixels.
#[derive(Debug)]
pub struct SynthesisOutput {
    pub dataset: Dataset,
    pub backgrounds: Vec<FrameEntry>,
    pub index: ContextIndex,
    pub run: PlanRun,
    pub summary: WriteSummary,
}

impl SynthesisOutput {
    /// One-line human summary.
    pub fn summary_line(&self) -> String {
        let boxes: usize = self.run.plans.iter().map(|p| p.placements.len()).sum();
        format!(
            "collages={} boxes={} skips={} refills={} discarded_draws={} unmatched_combos={} backgrounds={}/{}",
            self.run.plans.len(),
            boxes,
            self.run.total_skips(),
            self.run.refills,
            self.run.discarded_draws,
            self.run.unmatched_combos.len(),
            self.backgrounds.len(),
            self.dataset.frames.len(),
        )
    }
}

/// Mines backgrounds of a loaded dataset and indexes them with its boxes.
pub fn prepare(dataset: &Dataset, mining: MiningConfig) -> Result<(Vec<FrameEntry>, ContextIndex)> {
    let backgrounds = mine_backgrounds(&dataset.frames, &dataset.cabof, mining);
    let refs: Vec<_> = backgrounds.iter().map(|f| f.frame.clone()).collect();
    let index = build_index(&refs, &dataset.boxes, &dataset.substrate)?;
    Ok((backgrounds, index))
}

/// Runs the whole synthesis and writes `layout`, including `merged.json`
/// (original frames followed by the collages).
pub fn synthesize(
    root: &DatasetRoot,
    mining: MiningConfig,
    cfg: &SynthesisConfig,
    layout: &OutputLayout,
    workers: usize,
) -> Result<SynthesisOutput> {
    cfg.validate()?;
    let dataset = load_dataset(root)?;
    let (backgrounds, index) = prepare(&dataset, mining)?;
    let store = DiskFrameStore::new(&dataset.frames);
    let run = plan_collages(&index, &store, cfg)?;

    let writer = DatasetWriter::create(layout.clone())?;
    let crops = CropBank::for_plans(&run.plans, &dataset.boxes, &store)?;
    let records = render_plans(&run.plans, &crops, &store, workers, |c| writer.write_collage(c))?;
    drop(crops);
    let vocabulary: Vec<String> = dataset
        .boxes
        .iter()
        .map(|b| b.species.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let summary = writer.finish(&run.plans, &records, &vocabulary)?;

    let collages = CocoDataset::read(&layout.annotation_path)?;
    merge_manifests(&export_original(&dataset), &collages)?.write(&layout.merged_manifest_path)?;

    Ok(SynthesisOutput {
        dataset,
        backgrounds,
        index,
        run,
        summary,
    })
}
