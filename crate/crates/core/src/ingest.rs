//! Loading the label streams (frames manifest, boxes, CABOF, substrate
//! intervals) into the core model.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize};

use crate::error::{Error, Result};
use crate::model::{BoxLabel, CabofLabel, FrameKey, FrameRef, Rect, SubstrateCombo, Timestamp};

pub const FRAMES_HEADER: [&str; 6] = ["video_id", "frame_index", "timestamp_ms", "width", "height", "image_path"];
pub const BOXES_HEADER: [&str; 8] = ["box_id", "video_id", "frame_index", "x", "y", "w", "h", "species"];
pub const CABOF_HEADER: [&str; 4] = ["video_id", "timestamp_ms", "species", "count"];
pub const SUBSTRATE_HEADER: [&str; 4] = ["video_id", "start_ms", "end_ms", "codes"];

pub const DEFAULT_FPS: f64 = 30.0;

/// Locations of the label files and frame images of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRoot {
    /// Base directory for relative `image_path` entries.
    pub frames_dir: PathBuf,
    pub frames_manifest: PathBuf,
    pub boxes_path: PathBuf,
    pub cabof_path: PathBuf,
    pub substrate_path: PathBuf,
    pub fps: f64,
}

impl DatasetRoot {
    /// Conventional layout: `frames.csv`, `boxes.csv`, `cabof.csv` and
    /// `substrate.csv` directly under `dir`, image paths relative to `dir`.
    pub fn at(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetRoot {
            frames_dir: dir.to_path_buf(),
            frames_manifest: dir.join("frames.csv"),
            boxes_path: dir.join("boxes.csv"),
            cabof_path: dir.join("cabof.csv"),
            substrate_path: dir.join("substrate.csv"),
            fps: DEFAULT_FPS,
        }
    }

    pub fn with_fps(mut self, fps: f64) -> Self {
        self.fps = fps;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidConfig(format!("fps must be positive, got {}", self.fps)));
        }
        for p in [
            &self.frames_dir,
            &self.frames_manifest,
            &self.boxes_path,
            &self.cabof_path,
            &self.substrate_path,
        ] {
            if !p.exists() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
                ));
            }
        }
        Ok(())
    }

    pub fn resolve_image(&self, image_path: &Path) -> PathBuf {
        self.frames_dir.join(image_path)
    }
}

/// One row of the frames manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameEntry {
    pub frame: FrameRef,
    pub width: u32,
    pub height: u32,
    /// Resolved image location.
    pub image_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubstrateInterval {
    pub video_id: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub combo: SubstrateCombo,
}

impl SubstrateInterval {
    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }
}

/// Per-video substrate intervals sorted by start, checked for overlap.
#[derive(Debug, Clone, Default)]
pub struct SubstrateTrack {
    by_video: BTreeMap<String, Vec<SubstrateInterval>>,
}

impl SubstrateTrack {
    pub fn new(intervals: &[SubstrateInterval]) -> Result<Self> {
        let mut by_video: BTreeMap<String, Vec<SubstrateInterval>> = BTreeMap::new();
        for iv in intervals {
            by_video.entry(iv.video_id.clone()).or_default().push(iv.clone());
        }
        for (video_id, ivs) in &mut by_video {
            ivs.sort_by_key(|iv| (iv.start, iv.end));
            for pair in ivs.windows(2) {
                if pair[1].start < pair[0].end {
                    return Err(Error::Overlap {
                        video_id: video_id.clone(),
                        first_start: pair[0].start.millis(),
                        first_end: pair[0].end.millis(),
                        second_start: pair[1].start.millis(),
                        second_end: pair[1].end.millis(),
                    });
                }
            }
        }
        Ok(SubstrateTrack { by_video })
    }

    /// Combo covering `t` under half-open `[start, end)` semantics, or `unknown`.
    pub fn lookup(&self, video_id: &str, t: Timestamp) -> SubstrateCombo {
        let Some(ivs) = self.by_video.get(video_id) else {
            return SubstrateCombo::unknown();
        };
        let idx = ivs.partition_point(|iv| iv.start <= t);
        match idx.checked_sub(1).map(|i| &ivs[i]) {
            Some(iv) if iv.contains(t) => iv.combo.clone(),
            _ => SubstrateCombo::unknown(),
        }
    }

    pub fn combo_of(&self, frame: &FrameRef) -> SubstrateCombo {
        self.lookup(&frame.video_id, frame.timestamp)
    }
}

/// Everything `load_dataset` produces.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: DatasetRoot,
    pub frames: Vec<FrameEntry>,
    pub boxes: Vec<BoxLabel>,
    pub cabof: Vec<CabofLabel>,
    pub substrate: Vec<SubstrateInterval>,
}

impl Dataset {
    pub fn frame_refs(&self) -> Vec<FrameRef> {
        self.frames.iter().map(|f| f.frame.clone()).collect()
    }

    pub fn track(&self) -> SubstrateTrack {
        SubstrateTrack::new(&self.substrate).expect("intervals validated at load time")
    }
}

#[derive(Deserialize)]
struct FrameRow {
    video_id: String,
    frame_index: u64,
    timestamp_ms: u64,
    width: u32,
    height: u32,
    image_path: String,
}

#[derive(Deserialize)]
struct BoxRow {
    box_id: u64,
    video_id: String,
    frame_index: u64,
    x: i64,
    y: i64,
    w: i64,
    h: i64,
    species: String,
}

#[derive(Deserialize)]
struct CabofRow {
    video_id: String,
    timestamp_ms: u64,
    species: String,
    count: u32,
}

#[derive(Deserialize)]
struct SubstrateRow {
    video_id: String,
    start_ms: u64,
    end_ms: u64,
    codes: String,
}

/// Reads a headered CSV file, checking the header and returning each row with its line number.
fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<(u64, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let found = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    if found.is_empty() {
        return Err(Error::parse(path, 1, format!("missing header row, expected {}", header.join(","))));
    }
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::parse(
            path,
            1,
            format!(
                "unexpected header {:?}, expected {}",
                found.iter().collect::<Vec<_>>().join(","),
                header.join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .deserialize::<T>(Some(&found))
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push((line, row));
    }
    Ok(out)
}

pub fn load_frames_manifest(path: &Path, frames_dir: &Path, fps: f64) -> Result<Vec<FrameEntry>> {
    let rows: Vec<(u64, FrameRow)> = read_csv(path, &FRAMES_HEADER)?;
    let mut seen = HashSet::new();
    let mut frames = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        let expected = Timestamp::of_frame(r.frame_index, fps);
        if r.timestamp_ms != expected.millis() {
            return Err(Error::parse(
                path,
                line,
                format!(
                    "timestamp_ms {} disagrees with frame_index {} at {fps} fps (expected {})",
                    r.timestamp_ms,
                    r.frame_index,
                    expected.millis()
                ),
            ));
        }
        if r.width == 0 || r.height == 0 {
            return Err(Error::parse(path, line, "frame dimensions must be positive"));
        }
        if !seen.insert((r.video_id.clone(), r.frame_index)) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate frame {}#{}", r.video_id, r.frame_index),
            ));
        }
        frames.push(FrameEntry {
            frame: FrameRef::new(r.video_id, r.frame_index, expected),
            width: r.width,
            height: r.height,
            image_path: frames_dir.join(r.image_path),
        });
    }
    Ok(frames)
}

pub fn load_cabof(path: &Path) -> Result<Vec<CabofLabel>> {
    read_csv::<CabofRow>(path, &CABOF_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            if r.count < 1 {
                return Err(Error::parse(path, line, "CABOF count must be at least 1"));
            }
            Ok(CabofLabel {
                video_id: r.video_id,
                timestamp: Timestamp(r.timestamp_ms),
                species: r.species,
                count: r.count,
            })
        })
        .collect()
}

pub fn load_substrate(path: &Path) -> Result<Vec<SubstrateInterval>> {
    read_csv::<SubstrateRow>(path, &SUBSTRATE_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            if r.start_ms >= r.end_ms {
                return Err(Error::parse(path, line, "substrate interval needs start_ms < end_ms"));
            }
            let combo = SubstrateCombo::canonical(r.codes.split(';'))
                .map_err(|e| Error::parse(path, line, e.to_string()))?;
            Ok(SubstrateInterval {
                video_id: r.video_id,
                start: Timestamp(r.start_ms),
                end: Timestamp(r.end_ms),
                combo,
            })
        })
        .collect()
}

/// Parses all label streams under `root` and resolves each box's substrate.
pub fn load_dataset(root: &DatasetRoot) -> Result<Dataset> {
    root.validate()?;
    let frames = load_frames_manifest(&root.frames_manifest, &root.frames_dir, root.fps)?;
    let cabof = load_cabof(&root.cabof_path)?;
    let substrate = load_substrate(&root.substrate_path)?;
    let track = SubstrateTrack::new(&substrate)?;

    let by_key: BTreeMap<FrameKey, &FrameEntry> = frames.iter().map(|f| (f.frame.key(), f)).collect();
    let mut ids = HashSet::new();
    let mut boxes = Vec::new();
    let path = &root.boxes_path;
    for (line, r) in read_csv::<BoxRow>(path, &BOXES_HEADER)? {
        if !ids.insert(r.box_id) {
            return Err(Error::parse(path, line, format!("duplicate box_id {}", r.box_id)));
        }
        if r.species.is_empty() {
            return Err(Error::parse(path, line, "empty species"));
        }
        let key = FrameKey {
            video_id: r.video_id.clone(),
            frame_index: r.frame_index,
        };
        let missing = || Error::MissingFrameImage {
            box_id: r.box_id,
            video_id: r.video_id.clone(),
            frame_index: r.frame_index,
        };
        let entry = by_key.get(&key).ok_or_else(missing)?;
        if !entry.image_path.is_file() {
            return Err(missing());
        }
        let rect = Rect::from_signed(r.x, r.y, r.w, r.h).map_err(|e| Error::parse(path, line, e.to_string()))?;
        if !rect.fits_within(entry.width, entry.height) {
            return Err(Error::parse(
                path,
                line,
                format!("box {rect} exceeds frame {}x{}", entry.width, entry.height),
            ));
        }
        boxes.push(BoxLabel {
            id: r.box_id,
            frame: entry.frame.clone(),
            rect,
            species: r.species,
            substrate: track.combo_of(&entry.frame),
        });
    }

    Ok(Dataset {
        root: root.clone(),
        frames,
        boxes,
        cabof,
        substrate,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, 0, format!("{other:?}")),
    }
}

/// Writes frames in the frames-manifest format. Image paths are written
/// relative to `base` when possible.
pub fn write_frames_manifest(path: &Path, frames: &[FrameEntry], base: Option<&Path>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(FRAMES_HEADER).map_err(|e| csv_err(path, e))?;
    for f in frames {
        let image = base
            .and_then(|b| f.image_path.strip_prefix(b).ok())
            .unwrap_or(&f.image_path);
        w.write_record([
            f.frame.video_id.clone(),
            f.frame.frame_index.to_string(),
            f.frame.timestamp.millis().to_string(),
            f.width.to_string(),
            f.height.to_string(),
            image.to_string_lossy().into_owned(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_boxes(path: &Path, boxes: &[BoxLabel]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(BOXES_HEADER).map_err(|e| csv_err(path, e))?;
    for b in boxes {
        w.write_record([
            b.id.to_string(),
            b.frame.video_id.clone(),
            b.frame.frame_index.to_string(),
            b.rect.x().to_string(),
            b.rect.y().to_string(),
            b.rect.w().to_string(),
            b.rect.h().to_string(),
            b.species.clone(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_cabof(path: &Path, cabof: &[CabofLabel]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(CABOF_HEADER).map_err(|e| csv_err(path, e))?;
    for c in cabof {
        w.write_record([
            c.video_id.clone(),
            c.timestamp.millis().to_string(),
            c.species.clone(),
            c.count.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_substrate(path: &Path, intervals: &[SubstrateInterval]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(SUBSTRATE_HEADER).map_err(|e| csv_err(path, e))?;
    for iv in intervals {
        w.write_record([
            iv.video_id.clone(),
            iv.start.millis().to_string(),
            iv.end.millis().to_string(),
            iv.combo.codes().join(";"),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes an arbitrary small text file, mapping errors to `Error::Io`.
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
