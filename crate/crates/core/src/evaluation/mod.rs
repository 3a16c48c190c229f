//! Detection metrics: IoU, greedy score-ordered matching, 101-point
//! interpolated AP and the COCO-style aggregate suite.
//!
//! IoU thresholds are held as integer basis points and compared against
//! exact intersection/union counts, so a threshold of 0.55 means exactly
//! `inter * 10000 >= 5500 * union`. Recall points are compared the same way.

mod matching;

pub use matching::{match_detections, match_greedy, DetectionMatch};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset_io::CocoDataset;
use crate::error::{Error, Result};
use crate::model::{Detection, FrameKey, Rect};

/// |a ∩ b| and |a ∪ b| in pixels.
pub fn iou_parts(a: &Rect, b: &Rect) -> (u64, u64) {
    let inter = a.intersection_area(b);
    (inter, a.area() + b.area() - inter)
}

pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let (inter, union) = iou_parts(a, b);
    inter as f64 / union as f64
}

/// An IoU threshold in basis points (1/10000).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Threshold(u32);

impl Threshold {
    pub fn from_fraction(t: f64) -> Result<Self> {
        let bp = (t * 10_000.0).round();
        if !(t > 0.0 && t <= 1.0) || (t * 10_000.0 - bp).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "IoU threshold {t} must lie in (0, 1] with at most four decimals"
            )));
        }
        Ok(Threshold(bp as u32))
    }

    pub fn basis_points(self) -> u32 {
        self.0
    }

    pub fn as_fraction(self) -> f64 {
        self.0 as f64 / 10_000.0
    }

    /// `inter / union >= self`, exactly.
    pub fn admits(self, inter: u64, union: u64) -> bool {
        inter as u128 * 10_000 >= self.0 as u128 * union as u128
    }
}

/// Inclusive GT-area bounds in square pixels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaRange {
    pub name: String,
    pub min: u64,
    pub max: u64,
}

impl AreaRange {
    pub fn contains(&self, area: u64) -> bool {
        self.min <= area && area <= self.max
    }

    /// small: area < 32², medium: 32² ≤ area ≤ 96², large: area > 96².
    pub fn coco() -> Vec<AreaRange> {
        vec![
            AreaRange { name: "small".into(), min: 0, max: 32 * 32 - 1 },
            AreaRange { name: "medium".into(), min: 32 * 32, max: 96 * 96 },
            AreaRange { name: "large".into(), min: 96 * 96 + 1, max: u64::MAX },
        ]
    }

    fn all() -> AreaRange {
        AreaRange { name: "all".into(), min: 0, max: u64::MAX }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub area_ranges: Vec<AreaRange>,
}

impl EvalConfig {
    /// AP at IoU 0.5 only.
    pub fn map50() -> Self {
        EvalConfig {
            iou_thresholds: vec![0.5],
            area_ranges: Vec::new(),
        }
    }

    /// IoU 0.50:0.05:0.95 with COCO area ranges.
    pub fn full_suite() -> Self {
        EvalConfig {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            area_ranges: AreaRange::coco(),
        }
    }

    fn thresholds(&self) -> Result<Vec<Threshold>> {
        let ts = self
            .iou_thresholds
            .iter()
            .map(|&t| Threshold::from_fraction(t))
            .collect::<Result<Vec<_>>>()?;
        if ts.is_empty() || ts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("IoU thresholds must be nonempty and strictly increasing".into()));
        }
        Ok(ts)
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::full_suite()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtBox {
    pub frame: FrameKey,
    pub rect: Rect,
    pub species: String,
}

/// Ground-truth boxes plus the category vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub species: BTreeSet<String>,
    pub boxes: Vec<GtBox>,
}

impl GroundTruth {
    pub fn from_coco(coco: &CocoDataset) -> Result<Self> {
        let names = coco.category_names();
        let frames: BTreeMap<u64, FrameKey> = coco.images.iter().map(|i| (i.id, i.frame_key())).collect();
        let boxes = coco
            .annotations
            .iter()
            .map(|a| {
                let frame = frames
                    .get(&a.image_id)
                    .ok_or_else(|| Error::InvalidConfig(format!("annotation {} has unknown image {}", a.id, a.image_id)))?;
                let species = names
                    .get(&a.category_id)
                    .ok_or_else(|| Error::VocabularyMismatch(format!("category id {}", a.category_id)))?;
                let [x, y, w, h] = a.bbox;
                Ok(GtBox {
                    frame: frame.clone(),
                    rect: Rect::new(x, y, w, h)?,
                    species: species.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(GroundTruth {
            species: names.values().map(|s| s.to_string()).collect(),
            boxes,
        })
    }
}

/// Per-detection flags and score after matching, ready for AP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredFlag {
    pub score: f64,
    pub true_positive: bool,
}

/// 101-point interpolated AP. `flags` are taken in descending score order
/// (stable for ties). Returns None when `n_gt == 0`.
pub fn average_precision(flags: &[ScoredFlag], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut order: Vec<&ScoredFlag> = flags.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut tp = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let mut hits = 0u64;
    for (k, f) in order.iter().enumerate() {
        hits += f.true_positive as u64;
        tp.push(hits);
        precision.push(hits as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let n_gt = n_gt as u64;
    let sum: f64 = (0..=100u64)
        .map(|i| {
            // first rank whose recall tp/n_gt reaches i/100
            let k = tp.partition_point(|&t| t * 100 < i * n_gt);
            precision.get(k).copied().unwrap_or(0.0)
        })
        .sum();
    Some(sum / 101.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ApSuite {
    pub ap50_95: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalResult {
    /// AP at IoU 0.5 over all areas; None for classes without ground truth.
    pub per_class_ap: BTreeMap<String, Option<f64>>,
    /// Mean of the defined per-class APs.
    pub map: Option<f64>,
    pub suite: ApSuite,
}

impl EvalResult {
    /// Plain-text report; `full` adds every suite row.
    pub fn report(&self, full: bool) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.3}"));
        let mut out = String::new();
        writeln!(out, "mAP@0.5 {}", fmt(self.map)).unwrap();
        if full {
            writeln!(out, "metric    value").unwrap();
            for (name, v) in [
                ("AP50:95", self.suite.ap50_95),
                ("AP50", self.suite.ap50),
                ("AP75", self.suite.ap75),
                ("APS", self.suite.ap_small),
                ("APM", self.suite.ap_medium),
                ("APL", self.suite.ap_large),
            ] {
                writeln!(out, "{name:<9} {}", fmt(v)).unwrap();
            }
            writeln!(out, "class     AP50").unwrap();
            for (c, v) in &self.per_class_ap {
                writeln!(out, "{c:<9} {}", fmt(*v)).unwrap();
            }
        }
        out
    }
}

fn mean(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// AP of one class at one threshold, restricted to GT boxes in `range`.
///
/// Matching runs against every GT box of the class; a detection matched to
/// an out-of-range GT is ignored, as is an unmatched detection whose own
/// area is out of range. Ignored detections count as neither TP nor FP.
fn class_ap(gts: &[&GtBox], dets: &[&Detection], t: Threshold, range: &AreaRange) -> Option<f64> {
    let mut frames: BTreeSet<&FrameKey> = gts.iter().map(|g| &g.frame).collect();
    frames.extend(dets.iter().map(|d| &d.frame));
    let mut flags: Vec<(&Detection, usize, bool)> = Vec::new();
    let mut n_gt = 0;
    for (frame_rank, frame) in frames.into_iter().enumerate() {
        let g: Vec<Rect> = gts.iter().filter(|b| &b.frame == frame).map(|b| b.rect).collect();
        let d: Vec<&Detection> = dets.iter().copied().filter(|x| &x.frame == frame).collect();
        n_gt += g.iter().filter(|r| range.contains(r.area())).count();
        let scored: Vec<(Rect, f64)> = d.iter().map(|x| (x.rect, x.score)).collect();
        for m in match_greedy(&scored, &g, t) {
            let det = d[m.det];
            let ignored = match m.gt {
                Some(j) => !range.contains(g[j].area()),
                None => !range.contains(det.rect.area()),
            };
            if !ignored {
                flags.push((det, frame_rank, m.gt.is_some()));
            }
        }
    }
    // global order: score desc, then x, y, then frame order
    flags.sort_by(|a, b| {
        b.0.score
            .total_cmp(&a.0.score)
            .then(a.0.rect.x().cmp(&b.0.rect.x()))
            .then(a.0.rect.y().cmp(&b.0.rect.y()))
            .then(a.1.cmp(&b.1))
    });
    let scored: Vec<ScoredFlag> = flags
        .iter()
        .map(|(d, _, tp)| ScoredFlag {
            score: d.score,
            true_positive: *tp,
        })
        .collect();
    average_precision(&scored, n_gt)
}

/// Full evaluation of `detections` against `gt`.
pub fn evaluate(gt: &GroundTruth, detections: &[Detection], cfg: &EvalConfig) -> Result<EvalResult> {
    let thresholds = cfg.thresholds()?;
    for d in detections {
        if !gt.species.contains(&d.species) {
            return Err(Error::VocabularyMismatch(d.species.clone()));
        }
    }
    if gt.boxes.is_empty() {
        return Ok(EvalResult {
            per_class_ap: gt.species.iter().map(|s| (s.clone(), None)).collect(),
            ..Default::default()
        });
    }

    let all = AreaRange::all();
    let t50 = Threshold::from_fraction(0.5)?;
    let t75 = Threshold::from_fraction(0.75)?;
    let mut per_class_ap = BTreeMap::new();
    let mut at_threshold: BTreeMap<Threshold, Vec<Option<f64>>> = BTreeMap::new();
    let mut by_range: Vec<Vec<Option<f64>>> = vec![Vec::new(); cfg.area_ranges.len()];

    for species in &gt.species {
        let g: Vec<&GtBox> = gt.boxes.iter().filter(|b| &b.species == species).collect();
        let d: Vec<&Detection> = detections.iter().filter(|x| &x.species == species).collect();
        per_class_ap.insert(species.clone(), class_ap(&g, &d, t50, &all));
        for &t in &thresholds {
            at_threshold.entry(t).or_default().push(class_ap(&g, &d, t, &all));
            for (slot, range) in by_range.iter_mut().zip(&cfg.area_ranges) {
                slot.push(class_ap(&g, &d, t, range));
            }
        }
    }

    let range_metric = |name: &str| {
        cfg.area_ranges
            .iter()
            .position(|r| r.name == name)
            .and_then(|i| mean(by_range[i].iter().copied()))
    };
    let suite = ApSuite {
        ap50_95: if thresholds.len() > 1 {
            mean(at_threshold.values().flatten().copied())
        } else {
            None
        },
        ap50: mean(per_class_ap.values().copied()),
        ap75: at_threshold.get(&t75).and_then(|v| mean(v.iter().copied())),
        ap_small: range_metric("small"),
        ap_medium: range_metric("medium"),
        ap_large: range_metric("large"),
    };
    Ok(EvalResult {
        map: suite.ap50,
        per_class_ap,
        suite,
    })
}

pub const DETECTIONS_HEADER: [&str; 8] = ["video_id", "frame_index", "x", "y", "w", "h", "species", "score"];

/// Reads detections as CSV `video_id,frame_index,x,y,w,h,species,score`.
/// A header row is required unless the file is empty.
pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    #[derive(Deserialize)]
    struct Row {
        video_id: String,
        frame_index: u64,
        x: i64,
        y: i64,
        w: i64,
        h: i64,
        species: String,
        score: f64,
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
    if headers.iter().ne(DETECTIONS_HEADER) {
        return Err(Error::parse(path, 1, format!("expected header {}", DETECTIONS_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let r: Row = rec
            .deserialize(Some(&headers))
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        let rect = Rect::from_signed(r.x, r.y, r.w, r.h).map_err(|e| Error::parse(path, line, e.to_string()))?;
        let det = Detection::new(
            FrameKey {
                video_id: r.video_id,
                frame_index: r.frame_index,
            },
            rect,
            r.species,
            r.score,
        )
        .map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push(det);
    }
    Ok(out)
}

pub fn write_detections(path: &Path, detections: &[Detection]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let io = |e: csv::Error| Error::parse(path, 0, e.to_string());
    w.write_record(DETECTIONS_HEADER).map_err(io)?;
    for d in detections {
        w.write_record([
            d.frame.video_id.clone(),
            d.frame.frame_index.to_string(),
            d.rect.x().to_string(),
            d.rect.y().to_string(),
            d.rect.w().to_string(),
            d.rect.h().to_string(),
            d.species.clone(),
            format!("{}", d.score),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
