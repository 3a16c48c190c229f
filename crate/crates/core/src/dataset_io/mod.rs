//! On-disk output of a synthesis run.
//!
//! Layout under `out_dir`:
//!
//! - `images/collage_{plan_id:06}.png`
//! - `annotations.json`: COCO-style images/annotations/categories; each
//!   image carries `attributes.substrate` (the background combo) and
//!   `attributes.mode`.
//! - `provenance.jsonl`: one [`ProvenanceRecord`] per annotation.
//! - `run_manifest.jsonl`: one serialized [`CollagePlan`] per line with
//!   fields `plan_id`, `seed`, `mode`, `source_combo`, `background`
//!   (`video_id`, `frame_index`, `timestamp_ms`), `background_substrate`,
//!   `placements` (`source_box_id`, `dest` {x,y,w,h}, `paint_order`),
//!   `skips` (`box_id`, `reason`) and `epoch` (refill count).
//! - `merged.json`: original + collage training manifest.

mod coco;

pub use coco::{
    categories_for, export_original, merge_manifests, CocoAnnotation, CocoCategory, CocoDataset, CocoImage, CocoInfo,
    SOURCE_COLLAGE, SOURCE_ORIGINAL, SPECIES_SUPERCATEGORY,
};

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::collage::{Collage, CollageAnnotation};
use crate::error::{Error, Result};
use crate::model::CollagePlan;
use crate::png::save_png;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputLayout {
    pub out_dir: PathBuf,
    pub images_dir: PathBuf,
    pub annotation_path: PathBuf,
    pub provenance_path: PathBuf,
    pub run_manifest_path: PathBuf,
    pub merged_manifest_path: PathBuf,
}

impl OutputLayout {
    pub fn new(out_dir: impl AsRef<Path>) -> Self {
        let out_dir = out_dir.as_ref().to_path_buf();
        OutputLayout {
            images_dir: out_dir.join("images"),
            annotation_path: out_dir.join("annotations.json"),
            provenance_path: out_dir.join("provenance.jsonl"),
            run_manifest_path: out_dir.join("run_manifest.jsonl"),
            merged_manifest_path: out_dir.join("merged.json"),
            out_dir,
        }
    }

    pub fn image_file_name(plan_id: u64) -> String {
        format!("collage_{plan_id:06}.png")
    }

    /// `file_name` as recorded in the annotation file, relative to `out_dir`.
    pub fn image_rel_path(&self, plan_id: u64) -> String {
        let dir = self
            .images_dir
            .strip_prefix(&self.out_dir)
            .unwrap_or(&self.images_dir)
            .to_string_lossy()
            .into_owned();
        format!("{dir}/{}", Self::image_file_name(plan_id))
    }

    fn validate(&self) -> Result<()> {
        let files = [
            &self.annotation_path,
            &self.provenance_path,
            &self.run_manifest_path,
            &self.merged_manifest_path,
            &self.images_dir,
        ];
        let distinct: HashSet<&PathBuf> = files.iter().copied().collect();
        if distinct.len() != files.len() {
            return Err(Error::InvalidConfig("output paths must be distinct".into()));
        }
        Ok(())
    }
}

/// Lineage of one collage annotation back to its source box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub annotation_id: u64,
    pub plan_id: u64,
    pub source_box_id: u64,
    pub source_video: String,
    pub source_frame: u64,
    pub paint_order: u32,
    pub visible_px: u64,
    pub total_px: u64,
}

impl ProvenanceRecord {
    pub fn visible_fraction(&self) -> f64 {
        self.visible_px as f64 / self.total_px as f64
    }
}

/// Everything about a written collage except its pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollageRecord {
    pub plan_id: u64,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<CollageAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WriteSummary {
    pub images: usize,
    pub annotations: usize,
    pub categories: usize,
}

/// Writes collage images as they are rendered (from any thread) and the
/// manifests once at the end.
#[derive(Debug, Clone)]
pub struct DatasetWriter {
    layout: OutputLayout,
}

impl DatasetWriter {
    pub fn create(layout: OutputLayout) -> Result<Self> {
        layout.validate()?;
        std::fs::create_dir_all(&layout.images_dir).map_err(|e| Error::io(&layout.images_dir, e))?;
        Ok(DatasetWriter { layout })
    }

    pub fn layout(&self) -> &OutputLayout {
        &self.layout
    }

    pub fn write_collage(&self, collage: Collage) -> Result<CollageRecord> {
        let path = self.layout.images_dir.join(OutputLayout::image_file_name(collage.plan_id));
        save_png(&path, &collage.image)?;
        Ok(CollageRecord {
            plan_id: collage.plan_id,
            width: collage.image.width(),
            height: collage.image.height(),
            annotations: collage.annotations,
        })
    }

    /// Writes annotations, provenance and run manifest. `records` must hold
    /// exactly one entry per plan; `vocabulary` seeds the category list so
    /// ids stay stable across runs that happen to paste different species.
    pub fn finish(&self, plans: &[CollagePlan], records: &[CollageRecord], vocabulary: &[String]) -> Result<WriteSummary> {
        let mut by_plan: BTreeMap<u64, &CollageRecord> = BTreeMap::new();
        for r in records {
            if by_plan.insert(r.plan_id, r).is_some() {
                return Err(Error::DuplicatePlanId(r.plan_id));
            }
        }
        let mut seen = HashSet::new();
        for p in plans {
            if !seen.insert(p.plan_id) {
                return Err(Error::DuplicatePlanId(p.plan_id));
            }
            if !by_plan.contains_key(&p.plan_id) {
                return Err(Error::InvalidConfig(format!("plan {} has no rendered collage", p.plan_id)));
            }
        }
        if by_plan.len() != plans.len() {
            return Err(Error::InvalidConfig("rendered collages without a plan".into()));
        }

        let categories = categories_for(
            vocabulary
                .iter()
                .cloned()
                .chain(records.iter().flat_map(|r| r.annotations.iter().map(|a| a.species.clone()))),
        );
        let cat_id: BTreeMap<String, u64> = categories.iter().map(|c| (c.name.clone(), c.id)).collect();

        let mut coco = CocoDataset {
            info: Some(CocoInfo {
                description: "context matched collages".into(),
                version: env!("CARGO_PKG_VERSION").into(),
            }),
            categories,
            ..Default::default()
        };
        let mut provenance = Vec::new();
        let mut ordered: Vec<&CollagePlan> = plans.iter().collect();
        ordered.sort_by_key(|p| p.plan_id);
        for plan in ordered {
            let rec = by_plan[&plan.plan_id];
            coco.images.push(CocoImage {
                id: plan.plan_id,
                file_name: self.layout.image_rel_path(plan.plan_id),
                width: rec.width,
                height: rec.height,
                video_id: None,
                frame_index: None,
                source: None,
                attributes: BTreeMap::from([
                    ("substrate".to_string(), plan.background_substrate.as_canonical()),
                    ("mode".to_string(), plan.mode.to_string()),
                ]),
            });
            let mut anns: Vec<&CollageAnnotation> = rec.annotations.iter().collect();
            anns.sort_by_key(|a| a.paint_order);
            for a in anns {
                let id = coco.annotations.len() as u64 + 1;
                coco.annotations.push(CocoAnnotation {
                    id,
                    image_id: plan.plan_id,
                    category_id: cat_id[a.species.as_str()],
                    bbox: [a.rect.x(), a.rect.y(), a.rect.w(), a.rect.h()],
                    area: a.rect.area(),
                    iscrowd: 0,
                });
                provenance.push(ProvenanceRecord {
                    annotation_id: id,
                    plan_id: plan.plan_id,
                    source_box_id: a.source_box_id,
                    source_video: a.source_frame.video_id.clone(),
                    source_frame: a.source_frame.frame_index,
                    paint_order: a.paint_order,
                    visible_px: a.visible_px,
                    total_px: a.total_px,
                });
            }
        }

        coco.write(&self.layout.annotation_path)?;
        write_jsonl(&self.layout.provenance_path, &provenance)?;
        write_run_manifest(&self.layout.run_manifest_path, plans)?;
        Ok(WriteSummary {
            images: coco.images.len(),
            annotations: coco.annotations.len(),
            categories: coco.categories.len(),
        })
    }
}

/// Writes already-rendered collages in one go.
pub fn write_dataset(
    plans: &[CollagePlan],
    collages: Vec<Collage>,
    layout: &OutputLayout,
    vocabulary: &[String],
) -> Result<WriteSummary> {
    let writer = DatasetWriter::create(layout.clone())?;
    let records = collages
        .into_iter()
        .map(|c| writer.write_collage(c))
        .collect::<Result<Vec<_>>>()?;
    writer.finish(plans, &records, vocabulary)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, i as u64 + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_run_manifest(path: &Path, plans: &[CollagePlan]) -> Result<()> {
    write_jsonl(path, plans)
}

pub fn read_run_manifest(path: &Path) -> Result<Vec<CollagePlan>> {
    read_jsonl(path)
}

pub fn read_provenance(path: &Path) -> Result<Vec<ProvenanceRecord>> {
    read_jsonl(path)
}
