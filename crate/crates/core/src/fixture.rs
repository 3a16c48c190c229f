//! Deterministic synthetic datasets laid out exactly like real inputs:
//! flat-colored frames per substrate with patterned rectangles where boxes
//! are planted, plus the four label files.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::ingest::{
    write_boxes, write_cabof, write_frames_manifest, write_substrate, DatasetRoot, FrameEntry,
    SubstrateInterval, SubstrateTrack,
};
use crate::model::{BoxLabel, CabofLabel, FrameRef, Rect, SubstrateCombo, Timestamp};
use crate::png::save_png;
use crate::seed::{hash_str, mix64, rng};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedBox {
    pub frame_index: u64,
    pub rect: Rect,
    pub species: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureVideo {
    pub video_id: String,
    /// Number of extracted frames.
    pub n_frames: u64,
    /// Video frames between consecutive extracted frames.
    pub frame_stride: u64,
    /// `(start_ms, end_ms, codes)` intervals.
    pub substrate: Vec<(u64, u64, Vec<String>)>,
    pub boxes: Vec<PlantedBox>,
    /// `(timestamp_ms, species, count)` events.
    pub cabof: Vec<(u64, String, u32)>,
}

impl FixtureVideo {
    pub fn frame_indices(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.n_frames).map(move |k| k * self.frame_stride)
    }
}

/// Full description of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub seed: u64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub videos: Vec<FixtureVideo>,
}

/// Knobs for [`FixtureSpec::generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureParams {
    pub seed: u64,
    pub videos: usize,
    pub frames_per_video: u64,
    pub frame_stride: u64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    pub species: Vec<String>,
    pub substrates: Vec<String>,
    pub segments_per_video: usize,
    /// Probability that a segment gets no substrate label at all.
    pub gap_probability: f64,
    pub annotated_fraction: f64,
    pub max_boxes_per_frame: usize,
    /// Inclusive side-length range of planted boxes.
    pub box_side: (u32, u32),
    /// Probability that an annotated frame also carries a CABOF event.
    pub cabof_probability: f64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams {
            seed: 0,
            videos: 2,
            frames_per_video: 120,
            frame_stride: 30,
            fps: 30.0,
            width: 320,
            height: 240,
            species: ["urchin", "sea star", "anemone", "sponge", "crab", "snail"]
                .map(String::from)
                .to_vec(),
            substrates: ["mud", "cobble", "rock", "sand", "boulder"].map(String::from).to_vec(),
            segments_per_video: 4,
            gap_probability: 0.1,
            annotated_fraction: 0.3,
            max_boxes_per_frame: 4,
            box_side: (8, 48),
            cabof_probability: 0.6,
        }
    }
}

impl FixtureSpec {
    /// Draws a random schedule from `params.seed`.
    pub fn generate(params: &FixtureParams) -> Self {
        let mut r = rng(params.seed);
        let mut videos = Vec::with_capacity(params.videos);
        for v in 0..params.videos {
            let video_id = format!("video{v:02}");
            let last_index = params.frames_per_video.saturating_sub(1) * params.frame_stride;
            let duration = Timestamp::of_frame(last_index, params.fps).millis() + 1;

            let segments = params.segments_per_video.max(1);
            let mut cuts: Vec<u64> = (1..segments).map(|_| r.random_range(0..duration)).collect();
            cuts.sort_unstable();
            cuts.dedup();
            let mut bounds = vec![0];
            bounds.extend(cuts.into_iter().filter(|&c| c > 0));
            bounds.push(duration);
            let mut substrate = Vec::new();
            for w in bounds.windows(2) {
                if w[0] >= w[1] || r.random_bool(params.gap_probability) {
                    continue;
                }
                let k = r.random_range(1..=2.min(params.substrates.len()));
                let codes: Vec<String> = params.substrates.choose_multiple(&mut r, k).cloned().collect();
                substrate.push((w[0], w[1], codes));
            }

            let mut boxes = Vec::new();
            let mut cabof = Vec::new();
            let (lo, hi) = params.box_side;
            for k in 0..params.frames_per_video {
                if !r.random_bool(params.annotated_fraction) {
                    continue;
                }
                let frame_index = k * params.frame_stride;
                let n = r.random_range(1..=params.max_boxes_per_frame.max(1));
                for _ in 0..n {
                    let w = r.random_range(lo..=hi.min(params.width));
                    let h = r.random_range(lo..=hi.min(params.height));
                    let x = r.random_range(0..=params.width - w);
                    let y = r.random_range(0..=params.height - h);
                    let species = params.species.choose(&mut r).expect("nonempty species").clone();
                    boxes.push(PlantedBox {
                        frame_index,
                        rect: Rect::new(x, y, w, h).expect("positive size"),
                        species,
                    });
                }
                if r.random_bool(params.cabof_probability) {
                    let species = boxes.last().expect("just pushed").species.clone();
                    let t = Timestamp::of_frame(frame_index, params.fps).millis();
                    cabof.push((t, species, r.random_range(1..=3)));
                }
            }

            videos.push(FixtureVideo {
                video_id,
                n_frames: params.frames_per_video,
                frame_stride: params.frame_stride,
                substrate,
                boxes,
                cabof,
            });
        }
        FixtureSpec {
            seed: params.seed,
            fps: params.fps,
            width: params.width,
            height: params.height,
            videos,
        }
    }

    pub fn frames(&self) -> Vec<FrameRef> {
        self.videos
            .iter()
            .flat_map(|v| v.frame_indices().map(|i| FrameRef::at_fps(v.video_id.clone(), i, self.fps)))
            .collect()
    }

    pub fn substrate_intervals(&self) -> Result<Vec<SubstrateInterval>> {
        let mut out = Vec::new();
        for v in &self.videos {
            for (start, end, codes) in &v.substrate {
                out.push(SubstrateInterval {
                    video_id: v.video_id.clone(),
                    start: Timestamp(*start),
                    end: Timestamp(*end),
                    combo: SubstrateCombo::canonical(codes)?,
                });
            }
        }
        Ok(out)
    }

    pub fn cabof_labels(&self) -> Vec<CabofLabel> {
        self.videos
            .iter()
            .flat_map(|v| {
                v.cabof.iter().map(|(t, species, count)| CabofLabel {
                    video_id: v.video_id.clone(),
                    timestamp: Timestamp(*t),
                    species: species.clone(),
                    count: *count,
                })
            })
            .collect()
    }

    /// The box labels this fixture plants, ids assigned 1.. in schedule order.
    pub fn box_labels(&self) -> Result<Vec<BoxLabel>> {
        let track = SubstrateTrack::new(&self.substrate_intervals()?)?;
        let mut out = Vec::new();
        for v in &self.videos {
            for b in &v.boxes {
                let frame = FrameRef::at_fps(v.video_id.clone(), b.frame_index, self.fps);
                out.push(BoxLabel {
                    id: out.len() as u64 + 1,
                    substrate: track.combo_of(&frame),
                    frame,
                    rect: b.rect,
                    species: b.species.clone(),
                });
            }
        }
        Ok(out)
    }

    fn check(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.fps.is_nan() || self.fps <= 0.0 {
            return Err(Error::InvalidConfig("fixture needs positive size and fps".into()));
        }
        for v in &self.videos {
            for b in &v.boxes {
                let on_grid = v.frame_stride > 0
                    && b.frame_index % v.frame_stride == 0
                    && b.frame_index / v.frame_stride < v.n_frames;
                if !on_grid || !b.rect.fits_within(self.width, self.height) {
                    return Err(Error::InvalidConfig(format!(
                        "planted box {} on frame {} does not fit the fixture",
                        b.rect, b.frame_index
                    )));
                }
            }
        }
        Ok(())
    }
}

fn color_from(seed: u64, name: &str) -> Rgb<u8> {
    let h = mix64(seed ^ hash_str(name));
    let ch = |shift: u32| 40 + ((h >> shift) & 0xff) as u8 % 160;
    Rgb([ch(0), ch(8), ch(16)])
}

pub fn substrate_color(seed: u64, combo: &SubstrateCombo) -> Rgb<u8> {
    color_from(seed, &format!("substrate:{}", combo.as_canonical()))
}

/// Pixel at offset `(dx, dy)` inside a planted box of `species`.
pub fn species_pixel(seed: u64, species: &str, dx: u32, dy: u32) -> Rgb<u8> {
    let Rgb([r, g, b]) = color_from(seed, &format!("species:{species}"));
    let t = ((dx.wrapping_mul(7) ^ dy.wrapping_mul(13)) & 0x3f) as u8;
    Rgb([r.wrapping_add(t), g ^ t, b.wrapping_sub(t)])
}

pub fn image_file_name(frame: &FrameRef) -> String {
    format!("frames/{}_{:08}.png", frame.video_id, frame.frame_index)
}

/// Renders one fixture frame.
pub fn render_frame(spec: &FixtureSpec, track: &SubstrateTrack, video: &FixtureVideo, frame: &FrameRef) -> RgbImage {
    let bg = substrate_color(spec.seed, &track.combo_of(frame));
    let mut img = RgbImage::from_pixel(spec.width, spec.height, bg);
    for b in video.boxes.iter().filter(|b| b.frame_index == frame.frame_index) {
        for dy in 0..b.rect.h() {
            for dx in 0..b.rect.w() {
                img.put_pixel(
                    b.rect.x() + dx,
                    b.rect.y() + dy,
                    species_pixel(spec.seed, &b.species, dx, dy),
                );
            }
        }
    }
    img
}

/// Writes the fixture under `out_dir` in the conventional layout.
pub fn make_fixture(spec: &FixtureSpec, out_dir: &Path) -> Result<DatasetRoot> {
    spec.check()?;
    let frames_dir = out_dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;

    let intervals = spec.substrate_intervals()?;
    let track = SubstrateTrack::new(&intervals)?;
    let mut entries = Vec::new();
    for v in &spec.videos {
        for idx in v.frame_indices() {
            let frame = FrameRef::at_fps(v.video_id.clone(), idx, spec.fps);
            let path: PathBuf = out_dir.join(image_file_name(&frame));
            save_png(&path, &render_frame(spec, &track, v, &frame))?;
            entries.push(FrameEntry {
                frame,
                width: spec.width,
                height: spec.height,
                image_path: path,
            });
        }
    }

    let root = DatasetRoot::at(out_dir).with_fps(spec.fps);
    write_frames_manifest(&root.frames_manifest, &entries, Some(out_dir))?;
    write_boxes(&root.boxes_path, &spec.box_labels()?)?;
    write_cabof(&root.cabof_path, &spec.cabof_labels())?;
    write_substrate(&root.substrate_path, &intervals)?;
    Ok(root)
}
