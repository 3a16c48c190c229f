use std::collections::{BTreeMap, HashMap};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::occlusion::check_occlusion;
use crate::error::{Error, Result};
use crate::model::{BoxLabel, CollagePlan, FrameRef, Rect};
use crate::store::FrameStore;

/// One pasted box as it appears in the collage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollageAnnotation {
    pub rect: Rect,
    pub species: String,
    pub source_box_id: u64,
    pub source_frame: FrameRef,
    pub paint_order: u32,
    pub visible_px: u64,
    pub total_px: u64,
}

#[derive(Debug, Clone)]
pub struct Collage {
    pub plan_id: u64,
    pub image: RgbImage,
    /// In paint order.
    pub annotations: Vec<CollageAnnotation>,
}

/// Pre-cut source crops keyed by box id. Each source frame is decoded once.
#[derive(Debug, Clone, Default)]
pub struct CropBank {
    crops: HashMap<u64, (BoxLabel, RgbImage)>,
}

impl CropBank {
    pub fn build<'a, I>(boxes: I, store: &dyn FrameStore) -> Result<Self>
    where
        I: IntoIterator<Item = &'a BoxLabel>,
    {
        let mut by_frame: BTreeMap<&FrameRef, Vec<&BoxLabel>> = BTreeMap::new();
        for b in boxes {
            by_frame.entry(&b.frame).or_default().push(b);
        }
        let per_frame: Vec<Vec<(u64, (BoxLabel, RgbImage))>> = by_frame
            .into_par_iter()
            .map(|(frame, boxes)| {
                let img = store.load(frame)?;
                boxes
                    .into_iter()
                    .map(|b| {
                        let crop = crop(&img, &b.rect).ok_or_else(|| Error::InvalidRect {
                            x: b.rect.x().into(),
                            y: b.rect.y().into(),
                            w: b.rect.w().into(),
                            h: b.rect.h().into(),
                        })?;
                        Ok((b.id, (b.clone(), crop)))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(CropBank {
            crops: per_frame.into_iter().flatten().collect(),
        })
    }

    /// Every box referenced by `plans`, looked up in `boxes`.
    pub fn for_plans(plans: &[CollagePlan], boxes: &[BoxLabel], store: &dyn FrameStore) -> Result<Self> {
        let by_id: HashMap<u64, &BoxLabel> = boxes.iter().map(|b| (b.id, b)).collect();
        let mut needed = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for p in plans {
            for q in &p.placements {
                if seen.insert(q.source_box_id) {
                    needed.push(*by_id.get(&q.source_box_id).ok_or(Error::UnknownBox(q.source_box_id))?);
                }
            }
        }
        Self::build(needed, store)
    }

    pub fn get(&self, box_id: u64) -> Option<(&BoxLabel, &RgbImage)> {
        self.crops.get(&box_id).map(|(b, c)| (b, c))
    }

    pub fn len(&self) -> usize {
        self.crops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crops.is_empty()
    }
}

/// Copies `rect` out of `img`, or None if it does not fit.
pub fn crop(img: &RgbImage, rect: &Rect) -> Option<RgbImage> {
    if !rect.fits_within(img.width(), img.height()) {
        return None;
    }
    let mut out = RgbImage::new(rect.w(), rect.h());
    blit(img, rect.x(), rect.y(), &mut out, 0, 0, rect.w(), rect.h());
    Some(out)
}

/// Row-wise copy of a `w`x`h` block.
#[allow(clippy::too_many_arguments)]
fn blit(src: &RgbImage, sx: u32, sy: u32, dst: &mut RgbImage, dx: u32, dy: u32, w: u32, h: u32) {
    let (sw, dw) = (src.width() as usize * 3, dst.width() as usize * 3);
    let row = w as usize * 3;
    let (src_buf, dst_buf) = (src.as_raw(), &mut **dst);
    for r in 0..h as usize {
        let s = (sy as usize + r) * sw + sx as usize * 3;
        let d = (dy as usize + r) * dw + dx as usize * 3;
        dst_buf[d..d + row].copy_from_slice(&src_buf[s..s + row]);
    }
}

/// Renders a plan: background pixels with each crop copied verbatim in
/// paint order.
pub fn composite(plan: &CollagePlan, crops: &CropBank, store: &dyn FrameStore) -> Result<Collage> {
    let mut image = store.load(&plan.background)?;
    let report = check_occlusion(&plan.placements, 0.0);
    let mut annotations = Vec::with_capacity(plan.placements.len());
    for p in plan.painted() {
        let (label, crop) = crops.get(p.source_box_id).ok_or(Error::UnknownBox(p.source_box_id))?;
        if crop.dimensions() != (p.dest.w(), p.dest.h()) || !p.dest.fits_within(image.width(), image.height()) {
            return Err(Error::InvalidConfig(format!(
                "plan {}: placement of box {} at {} does not fit the crop or background",
                plan.plan_id, p.source_box_id, p.dest
            )));
        }
        blit(crop, 0, 0, &mut image, p.dest.x(), p.dest.y(), p.dest.w(), p.dest.h());
        let vis = report.get(p.paint_order).expect("report covers every placement");
        annotations.push(CollageAnnotation {
            rect: p.dest,
            species: label.species.clone(),
            source_box_id: label.id,
            source_frame: label.frame.clone(),
            paint_order: p.paint_order,
            visible_px: vis.visible_px,
            total_px: vis.total_px,
        });
    }
    Ok(Collage {
        plan_id: plan.plan_id,
        image,
        annotations,
    })
}

/// Composites every plan on a pool of `workers` threads and hands each
/// collage to `sink`. Results come back in plan order whatever the worker count.
pub fn render_plans<R, F>(
    plans: &[CollagePlan],
    crops: &CropBank,
    store: &dyn FrameStore,
    workers: usize,
    sink: F,
) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(Collage) -> Result<R> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        plans
            .par_iter()
            .map(|plan| composite(plan, crops, store).and_then(&sink))
            .collect()
    })
}
