use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_inputs, Descriptor, FeatureCube, Plane, PlaneSelection};
use crate::error::{Error, Result};
use crate::frame::FrameSequence;
use crate::geometry::RegionMask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbpParams {
    /// Neighbours per circle.
    pub p: usize,
    /// Radii along x, y and t.
    pub radii: [usize; 3],
}

impl Default for LbpParams {
    fn default() -> Self {
        Self {
            p: 8,
            radii: [1, 1, 1],
        }
    }
}

impl LbpParams {
    pub fn validate(&self) -> Result<()> {
        if !(2..=16).contains(&self.p) {
            return Err(Error::Config(format!(
                "LBP neighbours must be in 2..=16, got {}",
                self.p
            )));
        }
        if self.radii.contains(&0) {
            return Err(Error::Config("LBP radii must be >= 1".into()));
        }
        Ok(())
    }

    /// Histogram bins per plane after uniform mapping.
    pub fn bins(&self) -> usize {
        self.p * (self.p - 1) + 3
    }
}

/// Maps each `p`-bit code to its uniform-pattern bin. Patterns with at most two
/// circular 0/1 transitions get consecutive bins in code order; all others share
/// the last bin.
pub fn uniform_mapping(p: usize) -> Vec<u16> {
    let n = 1usize << p;
    let other = (p * (p - 1) + 2) as u16;
    let mut next = 0u16;
    (0..n)
        .map(|code| {
            let rotated = ((code >> 1) | ((code & 1) << (p - 1))) & (n - 1);
            if (code ^ rotated).count_ones() <= 2 {
                next += 1;
                next - 1
            } else {
                other
            }
        })
        .collect()
}

/// Integer sampling offsets on an ellipse with radii `(r1, r2)`, starting at angle 0.
fn offsets(p: usize, r1: usize, r2: usize) -> Vec<(isize, isize)> {
    (0..p)
        .map(|k| {
            let a = TAU * k as f64 / p as f64;
            (
                (r1 as f64 * a.cos()).round() as isize,
                (r2 as f64 * a.sin()).round() as isize,
            )
        })
        .collect()
}

/// LBP-TOP histograms per region, frame and plane, divided by region area.
/// Out-of-volume neighbours are clamped to the nearest valid pixel or frame.
pub fn lbptop(
    seq: &FrameSequence,
    mask: &RegionMask,
    planes: PlaneSelection,
    params: &LbpParams,
) -> Result<FeatureCube> {
    check_inputs(seq, mask)?;
    params.validate()?;
    let (w, h) = seq.dims();
    let n = seq.len();
    let regions = mask.region_count();
    let mapping = uniform_mapping(params.p);
    let bins = params.bins();
    let plane_list = planes.planes();
    let hist_len = bins * plane_list.len();
    let [rx, ry, rt] = params.radii;
    // Offsets as (dx, dy, dt).
    let plane_offsets: Vec<Vec<(isize, isize, isize)>> = plane_list
        .iter()
        .map(|plane| match plane {
            Plane::XY => offsets(params.p, rx, ry)
                .into_iter()
                .map(|(a, b)| (a, b, 0))
                .collect(),
            Plane::XT => offsets(params.p, rx, rt)
                .into_iter()
                .map(|(a, b)| (a, 0, b))
                .collect(),
            Plane::YT => offsets(params.p, ry, rt)
                .into_iter()
                .map(|(a, b)| (0, a, b))
                .collect(),
        })
        .collect();

    let clamp = |v: isize, len: usize| v.clamp(0, len as isize - 1) as usize;
    let blocks: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|t| {
            let mut block = vec![0.0; regions * hist_len];
            for r in 1..=regions {
                let hist = &mut block[(r - 1) * hist_len..r * hist_len];
                for &i in mask.pixels(r) {
                    let (x, y) = ((i % w) as isize, (i / w) as isize);
                    let centre = seq.frame(t).data()[i];
                    for (pi, offs) in plane_offsets.iter().enumerate() {
                        let mut code = 0usize;
                        for (k, &(dx, dy, dt)) in offs.iter().enumerate() {
                            let f = seq.frame(clamp(t as isize + dt, n));
                            let v = f.data()[clamp(y + dy, h) * w + clamp(x + dx, w)];
                            if v >= centre {
                                code |= 1 << k;
                            }
                        }
                        hist[pi * bins + mapping[code] as usize] += 1.0;
                    }
                }
                let area = mask.area(r) as f64;
                hist.iter_mut().for_each(|v| *v /= area);
            }
            block
        })
        .collect();

    let mut data = vec![0.0; regions * n * hist_len];
    for (t, block) in blocks.iter().enumerate() {
        for r in 0..regions {
            let dst = (r * n + t) * hist_len;
            data[dst..dst + hist_len].copy_from_slice(&block[r * hist_len..(r + 1) * hist_len]);
        }
    }
    FeatureCube::new(Descriptor::LBPTOP, Some(planes), bins, regions, n, data)
}
