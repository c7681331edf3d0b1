//! Landmark providers. Detection itself is external; these supply points.

use std::path::PathBuf;

use super::atlas::RegionAtlas;
use crate::error::Result;
use crate::frame::{Frame, SequenceInfo};
use crate::ingest::{load_landmarks, LandmarkSet};

/// Supplies control points for the first frame of a clip.
pub trait LandmarkProvider: Send + Sync {
    fn landmarks(&self, first_frame: &Frame, info: &SequenceInfo) -> Result<LandmarkSet>;
}

/// Reads the landmark JSON written next to the clip.
#[derive(Debug, Clone)]
pub struct FileLandmarks {
    pub path: PathBuf,
}

impl LandmarkProvider for FileLandmarks {
    fn landmarks(&self, _first_frame: &Frame, _info: &SequenceInfo) -> Result<LandmarkSet> {
        load_landmarks(&self.path)
    }
}

/// Returns the atlas mean shape scaled to the frame.
#[derive(Debug, Clone)]
pub struct AtlasLandmarks {
    pub atlas: RegionAtlas,
}

impl LandmarkProvider for AtlasLandmarks {
    fn landmarks(&self, first_frame: &Frame, _info: &SequenceInfo) -> Result<LandmarkSet> {
        LandmarkSet::new(
            self.atlas
                .scaled_points(first_frame.width(), first_frame.height()),
            0,
        )
    }
}
