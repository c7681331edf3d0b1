//! Per-region, per-frame histogram descriptors.

mod cube;
mod denoise;
mod gradients;
mod hog;
mod hoof;
mod lbp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cube::FeatureCube;
pub use denoise::{denoise, gaussian_kernel, DenoiseConfig, DenoiseMethod};
pub use gradients::{frame_gradients, gradients_3d, Gradients};
pub use hog::hog3d;
pub use hoof::{hoof, horn_schunck, Flow, FlowMethod, HoofParams};
pub use lbp::{lbptop, uniform_mapping, LbpParams};

use crate::error::{Error, Result};
use crate::frame::FrameSequence;
use crate::geometry::RegionMask;

/// One orthogonal slice orientation through the video volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Plane {
    XY,
    XT,
    YT,
}

/// Which planes contribute to a descriptor, concatenated in XY, XT, YT order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PlaneSelection {
    XY,
    XT,
    YT,
    XTYT,
    ALL,
}

impl PlaneSelection {
    pub const VARIANTS: [PlaneSelection; 5] = [
        PlaneSelection::XY,
        PlaneSelection::XT,
        PlaneSelection::YT,
        PlaneSelection::XTYT,
        PlaneSelection::ALL,
    ];

    pub fn planes(self) -> &'static [Plane] {
        match self {
            PlaneSelection::XY => &[Plane::XY],
            PlaneSelection::XT => &[Plane::XT],
            PlaneSelection::YT => &[Plane::YT],
            PlaneSelection::XTYT => &[Plane::XT, Plane::YT],
            PlaneSelection::ALL => &[Plane::XY, Plane::XT, Plane::YT],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlaneSelection::XY => "XY",
            PlaneSelection::XT => "XT",
            PlaneSelection::YT => "YT",
            PlaneSelection::XTYT => "XTYT",
            PlaneSelection::ALL => "ALL",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::VARIANTS.get(code as usize).copied()
    }
}

impl fmt::Display for PlaneSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlaneSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::VARIANTS
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown plane selection '{s}' (XY, XT, YT, XTYT, ALL)"
                ))
            })
    }
}

impl TryFrom<String> for PlaneSelection {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PlaneSelection> for String {
    fn from(p: PlaneSelection) -> String {
        p.as_str().to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Descriptor {
    HOG3D,
    LBPTOP,
    HOOF,
}

impl Descriptor {
    pub const VARIANTS: [Descriptor; 3] = [Descriptor::HOG3D, Descriptor::LBPTOP, Descriptor::HOOF];

    pub fn as_str(self) -> &'static str {
        match self {
            Descriptor::HOG3D => "HOG3D",
            Descriptor::LBPTOP => "LBPTOP",
            Descriptor::HOOF => "HOOF",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::VARIANTS.get(code as usize).copied()
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Descriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        Self::VARIANTS
            .into_iter()
            .find(|d| d.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown descriptor '{s}' (HOG3D, LBPTOP, HOOF)")))
    }
}

impl TryFrom<String> for Descriptor {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Descriptor> for String {
    fn from(d: Descriptor) -> String {
        d.as_str().to_owned()
    }
}

/// Everything `extract` needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub descriptor: Descriptor,
    pub planes: PlaneSelection,
    /// Orientation bins for HOG3D and HOOF.
    pub bins: usize,
    pub lbp: LbpParams,
    pub hoof: HoofParams,
    pub denoise: DenoiseConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            descriptor: Descriptor::HOG3D,
            planes: PlaneSelection::XT,
            bins: 8,
            lbp: LbpParams::default(),
            hoof: HoofParams::default(),
            denoise: DenoiseConfig::default(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 1 || (self.descriptor == Descriptor::HOG3D && self.bins < 2) {
            return Err(Error::Config(format!(
                "bins must be >= 2, got {}",
                self.bins
            )));
        }
        self.denoise.validate()?;
        self.lbp.validate()?;
        self.hoof.validate()
    }
}

/// De-noises, then computes the configured descriptor.
pub fn extract(seq: &FrameSequence, mask: &RegionMask, cfg: &FeatureConfig) -> Result<FeatureCube> {
    cfg.validate()?;
    let seq = denoise(seq, &cfg.denoise)?;
    match cfg.descriptor {
        Descriptor::HOG3D => hog3d(&seq, mask, cfg.planes, cfg.bins),
        Descriptor::LBPTOP => lbptop(&seq, mask, cfg.planes, &cfg.lbp),
        Descriptor::HOOF => {
            if cfg.planes != PlaneSelection::XY {
                log::warn!(
                    "HOOF ignores plane selection {}; one flow histogram per frame",
                    cfg.planes
                );
            }
            hoof(&seq, mask, cfg.bins, &cfg.hoof)
        }
    }
}

/// Checks the mask against the sequence and that every region is non-empty.
pub(crate) fn check_inputs(seq: &FrameSequence, mask: &RegionMask) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::TooShort("sequence has no frames".into()));
    }
    if seq.dims() != (mask.width(), mask.height()) {
        return Err(Error::Mismatch(format!(
            "mask is {}x{}, frames are {}x{}",
            mask.width(),
            mask.height(),
            seq.width(),
            seq.height()
        )));
    }
    if let Some(i) = mask.areas().iter().position(|&a| a == 0) {
        return Err(Error::Feature(format!("region {} is empty", i + 1)));
    }
    Ok(())
}
