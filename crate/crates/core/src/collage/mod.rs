//! Collage synthesis: sampling boxes per substrate combo, placing them on a
//! matched (or random) background and compositing the pixels.

mod composite;
mod occlusion;
mod place;
mod plan;

pub use composite::{composite, render_plans, Collage, CollageAnnotation, CropBank};
pub use occlusion::{check_occlusion, covered_area, OcclusionReport, Visibility};
pub use place::{place_boxes, PlacementOutcome};
pub use plan::{plan_collages, PlanRun};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Mode;

pub const DEFAULT_MAX_BOXES: usize = 15;
pub const DEFAULT_MIN_COLLAGES: usize = 2_000;
pub const DEFAULT_MAX_PLACE_ATTEMPTS: u32 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Upper bound of the uniform box count drawn per collage.
    pub max_boxes: usize,
    pub min_collages: usize,
    pub mode: Mode,
    /// Minimum visible fraction a pasted box must keep, exclusive.
    pub tau: f64,
    /// Redraws allowed per box before it is skipped.
    pub max_place_attempts: u32,
    pub master_seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            max_boxes: DEFAULT_MAX_BOXES,
            min_collages: DEFAULT_MIN_COLLAGES,
            mode: Mode::Matched,
            tau: 0.0,
            max_place_attempts: DEFAULT_MAX_PLACE_ATTEMPTS,
            master_seed: 0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_boxes < 1 {
            return Err(Error::InvalidConfig("max_boxes must be at least 1".into()));
        }
        if self.min_collages < 1 {
            return Err(Error::InvalidConfig("min_collages must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::InvalidConfig(format!("tau must lie in [0, 1), got {}", self.tau)));
        }
        Ok(())
    }
}
