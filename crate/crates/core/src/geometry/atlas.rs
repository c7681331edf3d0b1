//! The 26-region FACS atlas: canonical face shape plus region polygons.
//!
//! The atlas is data. `atlas_v1.json` ships with the crate and approximates
//! the published region layout; a corrected atlas is a file swap.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::delaunay::{orient, Point};
use crate::error::{Error, Result};
use crate::ingest::{AuCode, GroundTruthMovement, LANDMARK_COUNT};

pub const REGION_COUNT: usize = 26;

const DEFAULT_ATLAS: &str = include_str!("../../data/atlas_v1.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasRegion {
    pub region_id: u8,
    #[serde(default)]
    pub name: String,
    pub au_codes: Vec<AuCode>,
    pub polygon: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionAtlas {
    pub version: String,
    #[serde(default)]
    pub name: String,
    /// Width and height of the canonical coordinate frame.
    pub canonical_size: [usize; 2],
    pub canonical_points: Vec<Point>,
    pub regions: Vec<AtlasRegion>,
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        / 2.0
}

impl RegionAtlas {
    /// The bundled atlas.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_ATLAS).expect("bundled atlas is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let atlas: RegionAtlas =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("atlas: {e}")))?;
        atlas.validate()?;
        Ok(atlas)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version.trim().is_empty() {
            return Err(Error::Schema("atlas version is required".into()));
        }
        if self.canonical_points.len() != LANDMARK_COUNT {
            return Err(Error::Schema(format!(
                "atlas has {} canonical points, expected {LANDMARK_COUNT}",
                self.canonical_points.len()
            )));
        }
        if self.regions.len() != REGION_COUNT {
            return Err(Error::Schema(format!(
                "atlas has {} regions, expected {REGION_COUNT}",
                self.regions.len()
            )));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if r.region_id as usize != i + 1 {
                return Err(Error::Schema(format!(
                    "region at position {} has id {}, expected {}",
                    i,
                    r.region_id,
                    i + 1
                )));
            }
            let n = r.polygon.len();
            if n < 3 || polygon_area(&r.polygon).abs() < 1e-9 {
                return Err(Error::Schema(format!(
                    "region {} polygon is empty",
                    r.region_id
                )));
            }
            for a in 0..n {
                for b in a + 1..n {
                    if b == a + 1 || (a == 0 && b == n - 1) {
                        continue;
                    }
                    let (p, q) = (r.polygon[a], r.polygon[(a + 1) % n]);
                    let (s, t) = (r.polygon[b], r.polygon[(b + 1) % n]);
                    if segments_cross(p, q, s, t) {
                        return Err(Error::Schema(format!(
                            "region {} polygon self-intersects",
                            r.region_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn region(&self, id: u8) -> Option<&AtlasRegion> {
        self.regions.get((id as usize).checked_sub(1)?)
    }

    /// Region ids an annotated AU activates.
    pub fn regions_for_au(&self, code: &AuCode) -> Vec<u8> {
        self.regions
            .iter()
            .filter(|r| r.au_codes.iter().any(|c| c.covers(code)))
            .map(|r| r.region_id)
            .collect()
    }

    /// Regions activated by any AU of `movement`.
    pub fn positive_regions(&self, movement: &GroundTruthMovement) -> BTreeSet<u8> {
        movement
            .au_codes
            .iter()
            .flat_map(|c| self.regions_for_au(c))
            .collect()
    }

    /// AU codes in `movements` that no region covers.
    pub fn uncovered_aus(&self, movements: &[GroundTruthMovement]) -> Vec<AuCode> {
        let mut missing: BTreeSet<AuCode> = BTreeSet::new();
        for m in movements {
            for c in &m.au_codes {
                if self.regions_for_au(c).is_empty() {
                    missing.insert(c.clone());
                }
            }
        }
        missing.into_iter().collect()
    }

    /// Canonical points scaled to a `width` x `height` frame.
    pub fn scaled_points(&self, width: usize, height: usize) -> Vec<Point> {
        let sx = width as f64 / self.canonical_size[0] as f64;
        let sy = height as f64 / self.canonical_size[1] as f64;
        self.canonical_points
            .iter()
            .map(|p| [p[0] * sx, p[1] * sy])
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("atlas serializes")
    }
}
