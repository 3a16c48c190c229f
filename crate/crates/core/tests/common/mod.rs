#![allow(dead_code)]

pub mod eval_ref;

use std::path::{Path, PathBuf};

use collage_forge::context::{build_index, ContextIndex};
use collage_forge::fixture::{FixtureParams, FixtureSpec};
use collage_forge::ingest::FrameEntry;
use collage_forge::mining::{mine_backgrounds, MiningConfig};
use collage_forge::model::BoxLabel;
use collage_forge::store::DiskFrameStore;

/// Small fixture with enough backgrounds left after mining.
pub fn small_params(seed: u64) -> FixtureParams {
    FixtureParams {
        seed,
        videos: 2,
        frames_per_video: 150,
        frame_stride: 30,
        substrates: ["mud", "cobble", "rock", "sand"].map(String::from).to_vec(),
        gap_probability: 0.05,
        annotated_fraction: 0.3,
        cabof_probability: 0.15,
        ..FixtureParams::default()
    }
}

/// Planning inputs without touching the disk. Frame entries point at paths
/// that do not exist; only their dimensions are used.
pub struct PlanWorld {
    pub frames: Vec<FrameEntry>,
    pub boxes: Vec<BoxLabel>,
    pub index: ContextIndex,
    pub store: DiskFrameStore,
}

pub fn plan_world(spec: &FixtureSpec) -> PlanWorld {
    let frames: Vec<FrameEntry> = spec
        .frames()
        .into_iter()
        .map(|frame| FrameEntry {
            image_path: PathBuf::from("/nonexistent").join(collage_forge::fixture::image_file_name(&frame)),
            frame,
            width: spec.width,
            height: spec.height,
        })
        .collect();
    let boxes = spec.box_labels().unwrap();
    let bg = mine_backgrounds(&frames, &spec.cabof_labels(), MiningConfig::default());
    let refs: Vec<_> = bg.iter().map(|f| f.frame.clone()).collect();
    let index = build_index(&refs, &boxes, &spec.substrate_intervals().unwrap()).unwrap();
    let store = DiskFrameStore::new(&frames);
    PlanWorld {
        frames,
        boxes,
        index,
        store,
    }
}

/// Every regular file under `dir`, relative path → bytes, sorted by path.
pub fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push((p.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
