//! Shared domain types: timestamps, frames, boxes, substrate combos and
//! collage plans. Everything here is an immutable value with no I/O.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Milliseconds from the start of a video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn from_millis(millis: u64) -> Self {
        Timestamp(millis)
    }

    pub fn from_seconds(secs: u64) -> Self {
        Timestamp(secs * 1000)
    }

    pub fn millis(self) -> u64 {
        self.0
    }

    /// Timestamp of `frame_index` in a video recorded at `fps`, rounded to the nearest millisecond.
    pub fn of_frame(frame_index: u64, fps: f64) -> Self {
        Timestamp((frame_index as f64 * 1000.0 / fps).round() as u64)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let total_secs = self.0 / 1000;
        write!(
            f,
            "{:02}:{:02}:{:02}.{:03}",
            total_secs / 3600,
            (total_secs / 60) % 60,
            total_secs % 60,
            self.0 % 1000
        )
    }
}

/// One extracted frame of a video. Ordering is (video_id, frame_index, timestamp).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub video_id: String,
    pub frame_index: u64,
    #[serde(rename = "timestamp_ms")]
    pub timestamp: Timestamp,
}

impl FrameRef {
    pub fn new(video_id: impl Into<String>, frame_index: u64, timestamp: Timestamp) -> Self {
        FrameRef {
            video_id: video_id.into(),
            frame_index,
            timestamp,
        }
    }

    /// Builds a frame reference whose timestamp follows from `fps`.
    pub fn at_fps(video_id: impl Into<String>, frame_index: u64, fps: f64) -> Self {
        Self::new(video_id, frame_index, Timestamp::of_frame(frame_index, fps))
    }

    pub fn key(&self) -> FrameKey {
        FrameKey {
            video_id: self.video_id.clone(),
            frame_index: self.frame_index,
        }
    }
}

impl fmt::Display for FrameRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.video_id, self.frame_index)
    }
}

/// Lookup key for a frame, ignoring its timestamp.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameKey {
    pub video_id: String,
    pub frame_index: u64,
}

/// Axis-aligned integer pixel rectangle, top-left origin, `w` and `h` at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRect")]
pub struct Rect {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

#[derive(Deserialize)]
struct RawRect {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
}

impl TryFrom<RawRect> for Rect {
    type Error = Error;

    fn try_from(r: RawRect) -> Result<Self> {
        Rect::from_signed(r.x, r.y, r.w, r.h)
    }
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidRect {
                x: x.into(),
                y: y.into(),
                w: w.into(),
                h: h.into(),
            });
        }
        Ok(Rect { x, y, w, h })
    }

    /// Validating constructor for values parsed from text.
    pub fn from_signed(x: i64, y: i64, w: i64, h: i64) -> Result<Self> {
        let bad = || Error::InvalidRect { x, y, w, h };
        let fit = |v: i64| u32::try_from(v).map_err(|_| bad());
        let (x, y, w, h) = (fit(x)?, fit(y)?, fit(w)?, fit(h)?);
        if x.checked_add(w).is_none() || y.checked_add(h).is_none() {
            return Err(bad());
        }
        Rect::new(x, y, w, h)
    }

    pub fn x(&self) -> u32 {
        self.x
    }

    pub fn y(&self) -> u32 {
        self.y
    }

    pub fn w(&self) -> u32 {
        self.w
    }

    pub fn h(&self) -> u32 {
        self.h
    }

    /// Exclusive right edge.
    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.right() <= width as u64 && self.bottom() <= height as u64
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 as u64 || y1 <= y0 as u64 {
            return None;
        }
        Some(Rect {
            x: x0,
            y: y0,
            w: (x1 - x0 as u64) as u32,
            h: (y1 - y0 as u64) as u32,
        })
    }

    pub fn intersection_area(&self, other: &Rect) -> u64 {
        self.intersection(other).map_or(0, |r| r.area())
    }

    /// Same rect with origin moved to `(x, y)`.
    pub fn moved_to(&self, x: u32, y: u32) -> Rect {
        Rect { x, y, ..*self }
    }

    /// Every coordinate multiplied by `k`.
    pub fn scaled(&self, k: u32) -> Result<Rect> {
        Rect::from_signed(
            self.x as i64 * k as i64,
            self.y as i64 * k as i64,
            self.w as i64 * k as i64,
            self.h as i64 * k as i64,
        )
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x, self.y, self.w, self.h)
    }
}

/// Canonical, nonempty set of substrate class codes. Serialized as the
/// `+`-joined canonical string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubstrateCombo {
    codes: Vec<String>,
}

pub const UNKNOWN_SUBSTRATE: &str = "unknown";

impl SubstrateCombo {
    /// Trims, deduplicates and sorts `codes`.
    pub fn canonical<I, S>(codes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for code in codes {
            let code = code.as_ref().trim();
            if code.is_empty() {
                continue;
            }
            if code.contains(['+', ';', ',']) {
                return Err(Error::InvalidSubstrateCode(code.to_string()));
            }
            set.insert(code.to_string());
        }
        if set.is_empty() {
            return Err(Error::EmptyCombo);
        }
        Ok(SubstrateCombo {
            codes: set.into_iter().collect(),
        })
    }

    /// Parses a canonical `a+b` string.
    pub fn parse(canonical: &str) -> Result<Self> {
        Self::canonical(canonical.split('+'))
    }

    pub fn unknown() -> Self {
        SubstrateCombo {
            codes: vec![UNKNOWN_SUBSTRATE.to_string()],
        }
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn as_canonical(&self) -> String {
        self.codes.join("+")
    }

    /// |a ∩ b| and |a ∪ b| over the code sets.
    pub fn overlap_counts(&self, other: &SubstrateCombo) -> (usize, usize) {
        // both code lists are sorted, so a merge walk suffices
        let (mut i, mut j, mut inter) = (0, 0, 0);
        while i < self.codes.len() && j < other.codes.len() {
            match self.codes[i].cmp(&other.codes[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        (inter, self.codes.len() + other.codes.len() - inter)
    }
}

impl SubstrateCombo {
    fn canonical_bytes(&self) -> impl Iterator<Item = u8> + '_ {
        self.codes.iter().enumerate().flat_map(|(i, c)| {
            let sep: &[u8] = if i == 0 { b"" } else { b"+" };
            sep.iter().chain(c.as_bytes()).copied()
        })
    }
}

/// Orders combos exactly like their canonical strings.
impl Ord for SubstrateCombo {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canonical_bytes().cmp(other.canonical_bytes())
    }
}

impl PartialOrd for SubstrateCombo {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Free function form of [`SubstrateCombo::canonical`].
pub fn canonical_combo<S: AsRef<str>>(codes: &[S]) -> Result<SubstrateCombo> {
    SubstrateCombo::canonical(codes)
}

impl fmt::Display for SubstrateCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_canonical())
    }
}

impl Serialize for SubstrateCombo {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.as_canonical())
    }
}

impl<'de> Deserialize<'de> for SubstrateCombo {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        SubstrateCombo::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Species count event at a video timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CabofLabel {
    pub video_id: String,
    pub timestamp: Timestamp,
    pub species: String,
    pub count: u32,
}

/// One annotated bounding box on a training frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxLabel {
    pub id: u64,
    pub frame: FrameRef,
    pub rect: Rect,
    pub species: String,
    pub substrate: SubstrateCombo,
}

impl BoxLabel {
    /// Deterministic ordering key: (video_id, frame_index, box id).
    pub fn sort_key(&self) -> (&str, u64, u64) {
        (&self.frame.video_id, self.frame.frame_index, self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub source_box_id: u64,
    pub dest: Rect,
    pub paint_order: u32,
}

/// Background selection policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Backgrounds share the boxes' substrate combo (or its nearest fallback).
    Matched,
    /// Backgrounds drawn from the whole background set.
    Random,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Matched => "matched",
            Mode::Random => "random",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matched" => Ok(Mode::Matched),
            "random" => Ok(Mode::Random),
            other => Err(Error::InvalidConfig(format!(
                "mode must be 'matched' or 'random', got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Box larger than the background frame.
    TooLarge,
    /// No position satisfied the occlusion constraint within the attempt budget.
    Occluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub box_id: u64,
    pub reason: SkipReason,
}

/// Full recipe for one collage: which background, which boxes where, and in what order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollagePlan {
    pub plan_id: u64,
    pub seed: u64,
    pub mode: Mode,
    /// Substrate combo whose box pool supplied the placements.
    pub source_combo: SubstrateCombo,
    pub background: FrameRef,
    pub background_substrate: SubstrateCombo,
    pub placements: Vec<Placement>,
    #[serde(default)]
    pub skips: Vec<Skip>,
    /// Number of pool refills that happened before this plan was drawn.
    pub epoch: u32,
}

impl CollagePlan {
    /// Checks the structural invariants: 1..=max_boxes placements and a
    /// paint order that is a permutation of 0..n.
    pub fn validate(&self, max_boxes: usize) -> Result<()> {
        let n = self.placements.len();
        if n == 0 || n > max_boxes {
            return Err(Error::InvalidConfig(format!(
                "plan {} has {n} placements, expected 1..={max_boxes}",
                self.plan_id
            )));
        }
        let mut seen = vec![false; n];
        for p in &self.placements {
            let idx = p.paint_order as usize;
            if idx >= n || std::mem::replace(&mut seen[idx], true) {
                return Err(Error::InvalidConfig(format!(
                    "plan {} has a malformed paint order",
                    self.plan_id
                )));
            }
        }
        Ok(())
    }

    /// Placements sorted by paint order.
    pub fn painted(&self) -> Vec<Placement> {
        let mut v = self.placements.clone();
        v.sort_by_key(|p| p.paint_order);
        v
    }
}

/// A detector output on one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: FrameKey,
    pub rect: Rect,
    pub species: String,
    pub score: f64,
}

impl Detection {
    pub fn new(frame: FrameKey, rect: Rect, species: impl Into<String>, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidConfig(format!("detection score {score} outside [0, 1]")));
        }
        Ok(Detection {
            frame,
            rect,
            species: species.into(),
            score,
        })
    }
}

impl Serialize for FrameKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("FrameKey", 2)?;
        st.serialize_field("video_id", &self.video_id)?;
        st.serialize_field("frame_index", &self.frame_index)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for FrameKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            video_id: String,
            frame_index: u64,
        }
        let r = Raw::deserialize(d)?;
        Ok(FrameKey {
            video_id: r.video_id,
            frame_index: r.frame_index,
        })
    }
}
