//! Region-level scoring of spotting results, ROC sweeps and reports.

mod report;
mod roc;

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

pub use report::{EvalReport, ReportRow};
pub use roc::{
    auc, random_control, roc_from_results, roc_sweep, RocCurve, RocPoint, DEFAULT_SWEEP,
};

use crate::error::{Error, Result};
use crate::geometry::{RegionAtlas, REGION_COUNT};
use crate::ingest::GroundTruthMovement;
use crate::spotting::SpottingResult;

/// Per-region movement windows of one clip. A region is positive iff it has a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGroundTruth {
    pub clip_id: String,
    pub frames: usize,
    /// Inclusive `[onset, offset]` windows; index 0 is region 1.
    pub windows: Vec<Vec<(usize, usize)>>,
}

impl RegionGroundTruth {
    /// Maps every annotated AU of the clip's movements onto atlas regions.
    pub fn from_movements(
        atlas: &RegionAtlas,
        clip_id: &str,
        frames: usize,
        movements: &[GroundTruthMovement],
    ) -> Result<Self> {
        let uncovered = atlas.uncovered_aus(movements);
        if !uncovered.is_empty() {
            let list: Vec<String> = uncovered.iter().map(ToString::to_string).collect();
            return Err(Error::Validation(format!(
                "AU codes not covered by the atlas: {}",
                list.join(", ")
            )));
        }
        let mut windows = vec![Vec::new(); atlas.regions.len()];
        for m in movements.iter().filter(|m| m.clip_id == clip_id) {
            if m.offset >= frames {
                return Err(Error::Validation(format!(
                    "movement [{}, {}] exceeds clip {clip_id} of {frames} frames",
                    m.onset, m.offset
                )));
            }
            for r in atlas.positive_regions(m) {
                windows[r as usize - 1].push((m.onset, m.offset));
            }
        }
        Ok(Self {
            clip_id: clip_id.to_owned(),
            frames,
            windows,
        })
    }

    pub fn is_positive(&self, region: usize) -> bool {
        !self.windows[region - 1].is_empty()
    }

    pub fn in_window(&self, region: usize, frame: usize) -> bool {
        self.windows[region - 1]
            .iter()
            .any(|&(on, off)| (on..=off).contains(&frame))
    }
}

/// Confusion counts over (clip, region) cells.
///
/// A positive region whose peaks all miss the window is one FN plus one FP per
/// missed peak; those extra FPs are also tallied in `spurious` so that
/// `tp + fn + tn + (fp - spurious)` always equals the number of cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub spurious: u64,
}

impl ConfusionCounts {
    pub fn cells(&self) -> u64 {
        self.tp + self.fn_ + self.tn + self.fp - self.spurious
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
        self.spurious += o.spurious;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        let mut acc = Self::default();
        for c in iter {
            acc += c;
        }
        acc
    }
}

/// Scores one clip. One TP per region at most; extra in-window peaks are ignored.
pub fn spot_check(result: &SpottingResult, gt: &RegionGroundTruth) -> Result<ConfusionCounts> {
    if result.clip_id != gt.clip_id {
        return Err(Error::Mismatch(format!(
            "result is for clip '{}', ground truth for '{}'",
            result.clip_id, gt.clip_id
        )));
    }
    let mut c = ConfusionCounts::default();
    for region in 1..=gt.windows.len() {
        let apexes: Vec<usize> = result
            .detections
            .iter()
            .filter(|d| d.region_id as usize == region)
            .map(|d| d.apex)
            .collect();
        if gt.is_positive(region) {
            if apexes.iter().any(|&a| gt.in_window(region, a)) {
                c.tp += 1;
            } else {
                c.fn_ += 1;
                c.fp += apexes.len() as u64;
                c.spurious += apexes.len() as u64;
            }
        } else if apexes.is_empty() {
            c.tn += 1;
        } else {
            c.fp += 1;
        }
    }
    Ok(c)
}

/// Ratios of a confusion table; `None` marks a 0/0 ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f_measure: Option<f64>,
    pub accuracy: Option<f64>,
    pub fpr: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let recall = ratio(c.tp, c.tp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    let f_measure = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Metrics {
        recall,
        precision,
        f_measure,
        accuracy: ratio(c.tp + c.tn, c.tp + c.fp + c.fn_ + c.tn),
        fpr: ratio(c.fp, c.fp + c.tn),
    }
}

/// Cells per clip.
pub const CELLS_PER_CLIP: u64 = REGION_COUNT as u64;
