//! COCO-style annotation container with integer pixel boxes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::model::FrameKey;

pub const SOURCE_ORIGINAL: &str = "original";
pub const SOURCE_COLLAGE: &str = "collage";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CocoDataset {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info: Option<CocoInfo>,
    #[serde(default)]
    pub images: Vec<CocoImage>,
    #[serde(default)]
    pub annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CocoInfo {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_index: Option<u64>,
    /// `original` or `collage` in merged manifests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Free-form per-image attributes; carries `substrate`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl CocoImage {
    /// Key used to join detections: `(video_id, frame_index)` when present,
    /// otherwise the file stem and the image id.
    pub fn frame_key(&self) -> FrameKey {
        match (&self.video_id, self.frame_index) {
            (Some(v), Some(i)) => FrameKey {
                video_id: v.clone(),
                frame_index: i,
            },
            _ => FrameKey {
                video_id: Path::new(&self.file_name)
                    .file_stem()
                    .map_or_else(|| self.file_name.clone(), |s| s.to_string_lossy().into_owned()),
                frame_index: self.frame_index.unwrap_or(self.id),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    /// `[x, y, width, height]`, top-left origin.
    pub bbox: [u32; 4],
    pub area: u64,
    #[serde(default)]
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
    #[serde(default)]
    pub supercategory: String,
}

pub const SPECIES_SUPERCATEGORY: &str = "species";

impl CocoDataset {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line() as u64, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("coco dataset serializes");
        text.push('\n');
        crate::ingest::write_text(path, &text)
    }

    pub fn category_names(&self) -> BTreeMap<u64, &str> {
        self.categories.iter().map(|c| (c.id, c.name.as_str())).collect()
    }
}

/// Species categories numbered 1.. in name order.
pub fn categories_for<I, S>(species: I) -> Vec<CocoCategory>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let names: std::collections::BTreeSet<String> = species.into_iter().map(Into::into).collect();
    names
        .into_iter()
        .enumerate()
        .map(|(i, name)| CocoCategory {
            id: i as u64 + 1,
            name,
            supercategory: SPECIES_SUPERCATEGORY.into(),
        })
        .collect()
}

/// Exports the original training frames and their boxes. Images are
/// numbered 1.. in (video_id, frame_index) order.
pub fn export_original(dataset: &Dataset) -> CocoDataset {
    let track = dataset.track();
    let categories = categories_for(dataset.boxes.iter().map(|b| b.species.clone()));
    let cat_id: BTreeMap<&str, u64> = categories.iter().map(|c| (c.name.as_str(), c.id)).collect();

    let mut frames: Vec<_> = dataset.frames.iter().collect();
    frames.sort_by(|a, b| a.frame.cmp(&b.frame));
    let mut image_id: BTreeMap<FrameKey, u64> = BTreeMap::new();
    let images = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let id = i as u64 + 1;
            image_id.insert(f.frame.key(), id);
            CocoImage {
                id,
                file_name: f.image_path.to_string_lossy().into_owned(),
                width: f.width,
                height: f.height,
                video_id: Some(f.frame.video_id.clone()),
                frame_index: Some(f.frame.frame_index),
                source: None,
                attributes: BTreeMap::from([("substrate".to_string(), track.combo_of(&f.frame).as_canonical())]),
            }
        })
        .collect();

    let mut boxes: Vec<_> = dataset.boxes.iter().collect();
    boxes.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let annotations = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| CocoAnnotation {
            id: i as u64 + 1,
            image_id: image_id[&b.frame.key()],
            category_id: cat_id[b.species.as_str()],
            bbox: [b.rect.x(), b.rect.y(), b.rect.w(), b.rect.h()],
            area: b.rect.area(),
            iscrowd: 0,
        })
        .collect();

    CocoDataset {
        info: Some(CocoInfo {
            description: "original training frames".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }),
        images,
        annotations,
        categories,
    }
}

/// Concatenates `original` and `collage`, merging categories by species name
/// and re-keying image, annotation and category ids densely from 1.
pub fn merge_manifests(original: &CocoDataset, collage: &CocoDataset) -> Result<CocoDataset> {
    let mut supercat: BTreeMap<&str, &str> = BTreeMap::new();
    for c in original.categories.iter().chain(&collage.categories) {
        match supercat.get(c.name.as_str()) {
            Some(&prev) if prev != c.supercategory => {
                return Err(Error::SpeciesMismatch {
                    name: c.name.clone(),
                    left: format!("supercategory {prev:?}"),
                    right: format!("supercategory {:?}", c.supercategory),
                })
            }
            _ => {
                supercat.insert(&c.name, &c.supercategory);
            }
        }
    }
    let categories: Vec<CocoCategory> = supercat
        .iter()
        .enumerate()
        .map(|(i, (name, sup))| CocoCategory {
            id: i as u64 + 1,
            name: name.to_string(),
            supercategory: sup.to_string(),
        })
        .collect();
    let new_cat: BTreeMap<String, u64> = categories.iter().map(|c| (c.name.clone(), c.id)).collect();

    let mut merged = CocoDataset {
        info: Some(CocoInfo {
            description: "merged original + collage training set".into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }),
        images: Vec::new(),
        annotations: Vec::new(),
        categories,
    };
    for (part, source) in [(original, SOURCE_ORIGINAL), (collage, SOURCE_COLLAGE)] {
        let names = part.category_names();
        let mut image_map = BTreeMap::new();
        for img in &part.images {
            let id = merged.images.len() as u64 + 1;
            if image_map.insert(img.id, id).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate image id {} in {source} manifest", img.id)));
            }
            merged.images.push(CocoImage {
                id,
                source: Some(source.to_string()),
                ..img.clone()
            });
        }
        for ann in &part.annotations {
            let image_id = *image_map.get(&ann.image_id).ok_or_else(|| {
                Error::InvalidConfig(format!("annotation {} references missing image {}", ann.id, ann.image_id))
            })?;
            let name = names.get(&ann.category_id).ok_or_else(|| {
                Error::VocabularyMismatch(format!("category id {} in {source} manifest", ann.category_id))
            })?;
            merged.annotations.push(CocoAnnotation {
                id: merged.annotations.len() as u64 + 1,
                image_id,
                category_id: new_cat[*name],
                ..ann.clone()
            });
        }
    }
    Ok(merged)
}
