//! Slow reference for detection metrics. Matching is an exhaustive search
//! over assignments for the lexicographically best per-detection outcome
//! in score order; AP is evaluated directly from its definition in f64.

use std::collections::{BTreeMap, BTreeSet};

use collage_forge::evaluation::GtBox;
use collage_forge::model::{Detection, FrameKey, Rect};

pub const THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Range {
    All,
    Small,
    Medium,
    Large,
}

impl Range {
    pub fn contains(self, area: u64) -> bool {
        match self {
            Range::All => true,
            Range::Small => area < 32 * 32,
            Range::Medium => (32 * 32..=96 * 96).contains(&area),
            Range::Large => area > 96 * 96,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefSuite {
    pub per_class: BTreeMap<String, Option<f64>>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap50_95: Option<f64>,
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
}

pub fn iou_f64(a: &Rect, b: &Rect) -> f64 {
    let (ax0, ay0, ax1, ay1) = (a.x() as i64, a.y() as i64, (a.x() + a.w()) as i64, (a.y() + a.h()) as i64);
    let (bx0, by0, bx1, by1) = (b.x() as i64, b.y() as i64, (b.x() + b.w()) as i64, (b.y() + b.h()) as i64);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0);
    let inter = (iw * ih) as f64;
    let union = (a.w() as f64 * a.h() as f64) + (b.w() as f64 * b.h() as f64) - inter;
    inter / union
}

/// Detections sorted by score desc, then lower x, then lower y.
fn score_sorted<'a>(dets: &[&'a Detection]) -> Vec<&'a Detection> {
    let mut v = dets.to_vec();
    v.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.rect.x().cmp(&b.rect.x()))
            .then(a.rect.y().cmp(&b.rect.y()))
    });
    v
}

/// Per detection (already in processing order): matched GT index or None.
pub fn brute_force_match(dets: &[Rect], gts: &[Rect], t: f64) -> Vec<Option<usize>> {
    let ious: Vec<Vec<f64>> = dets.iter().map(|d| gts.iter().map(|g| iou_f64(d, g)).collect()).collect();
    // Key of one decision: matched beats unmatched, then higher IoU, then lower GT index.
    let key = |i: usize, c: Option<usize>| match c {
        Some(j) => (1, ious[i][j], -(j as i64)),
        None => (0, 0.0, 0),
    };
    let mut best: Option<Vec<Option<usize>>> = None;
    let mut cur = Vec::with_capacity(dets.len());
    let mut used = vec![false; gts.len()];

    #[allow(clippy::too_many_arguments)]
    fn rec(
        i: usize,
        n: usize,
        ious: &[Vec<f64>],
        t: f64,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        best: &mut Option<Vec<Option<usize>>>,
        key: &dyn Fn(usize, Option<usize>) -> (i32, f64, i64),
    ) {
        if i == n {
            let better = match best {
                None => true,
                Some(b) => {
                    let mut ord = std::cmp::Ordering::Equal;
                    for k in 0..n {
                        ord = key(k, cur[k]).partial_cmp(&key(k, b[k])).unwrap();
                        if ord != std::cmp::Ordering::Equal {
                            break;
                        }
                    }
                    ord == std::cmp::Ordering::Greater
                }
            };
            if better {
                *best = Some(cur.clone());
            }
            return;
        }
        cur.push(None);
        rec(i + 1, n, ious, t, used, cur, best, key);
        cur.pop();
        for j in 0..used.len() {
            if !used[j] && ious[i][j] > 0.0 && ious[i][j] >= t {
                used[j] = true;
                cur.push(Some(j));
                rec(i + 1, n, ious, t, used, cur, best, key);
                cur.pop();
                used[j] = false;
            }
        }
    }
    rec(0, dets.len(), &ious, t, &mut used, &mut cur, &mut best, &key);
    best.unwrap_or_default()
}

/// Interpolated precision at 101 recall points, straight from the definition.
pub fn ap_from_flags(flags: &[(f64, bool)], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut sorted = flags.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut pr = Vec::new();
    let mut tp = 0usize;
    for (k, (_, hit)) in sorted.iter().enumerate() {
        if *hit {
            tp += 1;
        }
        pr.push((tp as f64 / (k + 1) as f64, tp as f64 / n_gt as f64));
    }
    let mut sum = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let p = pr
            .iter()
            .filter(|(_, rec)| *rec >= r)
            .map(|(p, _)| *p)
            .fold(0.0f64, f64::max);
        sum += p;
    }
    Some(sum / 101.0)
}

fn class_ap(gts: &[&GtBox], dets: &[&Detection], t: f64, range: Range) -> Option<f64> {
    let frames: BTreeSet<&FrameKey> = gts.iter().map(|g| &g.frame).chain(dets.iter().map(|d| &d.frame)).collect();
    let mut flags = Vec::new();
    let mut n_gt = 0;
    for f in frames {
        let g: Vec<Rect> = gts.iter().filter(|b| &b.frame == f).map(|b| b.rect).collect();
        n_gt += g.iter().filter(|r| range.contains(r.area())).count();
        let fd: Vec<&Detection> = dets.iter().copied().filter(|d| &d.frame == f).collect();
        let d = score_sorted(&fd);
        let rects: Vec<Rect> = d.iter().map(|x| x.rect).collect();
        for (det, m) in d.iter().zip(brute_force_match(&rects, &g, t)) {
            match m {
                Some(j) if range.contains(g[j].area()) => flags.push((det.score, true)),
                Some(_) => {}
                None if range.contains(det.rect.area()) => flags.push((det.score, false)),
                None => {}
            }
        }
    }
    ap_from_flags(&flags, n_gt)
}

fn mean(v: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let xs: Vec<f64> = v.into_iter().flatten().collect();
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Scores must be distinct across detections of a class for the result to
/// be independent of tie handling.
pub fn reference_suite(gts: &[GtBox], dets: &[Detection], classes: &[String]) -> RefSuite {
    let mut out = RefSuite::default();
    let mut all_t = Vec::new();
    let mut at75 = Vec::new();
    let (mut s, mut m, mut l) = (Vec::new(), Vec::new(), Vec::new());
    for c in classes {
        let g: Vec<&GtBox> = gts.iter().filter(|b| &b.species == c).collect();
        let d: Vec<&Detection> = dets.iter().filter(|x| &x.species == c).collect();
        out.per_class.insert(c.clone(), class_ap(&g, &d, 0.5, Range::All));
        for &t in &THRESHOLDS {
            let ap = class_ap(&g, &d, t, Range::All);
            all_t.push(ap);
            if t == 0.75 {
                at75.push(ap);
            }
            s.push(class_ap(&g, &d, t, Range::Small));
            m.push(class_ap(&g, &d, t, Range::Medium));
            l.push(class_ap(&g, &d, t, Range::Large));
        }
    }
    out.ap50 = mean(out.per_class.values().copied());
    out.ap75 = mean(at75);
    out.ap50_95 = mean(all_t);
    out.ap_s = mean(s);
    out.ap_m = mean(m);
    out.ap_l = mean(l);
    out
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}
