use std::f64::consts::TAU;

use rayon::prelude::*;

use super::gradients::frame_gradients;
use super::{check_inputs, Descriptor, FeatureCube, Plane, PlaneSelection};
use crate::error::{Error, Result};
use crate::frame::FrameSequence;
use crate::geometry::RegionMask;

/// Adds `mag` to the two bins around `theta`, linearly split. Bin b is centred at b*2pi/B.
#[inline]
fn vote(hist: &mut [f64], theta: f64, mag: f64) {
    let bins = hist.len();
    let u = theta.rem_euclid(TAU) * bins as f64 / TAU;
    let lo = u.floor();
    let frac = u - lo;
    let b0 = (lo as usize) % bins;
    hist[b0] += mag * (1.0 - frac);
    hist[(b0 + 1) % bins] += mag * frac;
}

/// Oriented-gradient histograms per region, frame and plane, divided by region area.
pub fn hog3d(
    seq: &FrameSequence,
    mask: &RegionMask,
    planes: PlaneSelection,
    bins: usize,
) -> Result<FeatureCube> {
    check_inputs(seq, mask)?;
    if bins < 2 {
        return Err(Error::Config(format!(
            "HOG3D needs at least 2 bins, got {bins}"
        )));
    }
    let regions = mask.region_count();
    let frames = seq.len();
    let plane_list = planes.planes();
    let hist_len = bins * plane_list.len();

    // One (regions x hist_len) block per frame.
    let blocks: Vec<Vec<f64>> = (0..frames)
        .into_par_iter()
        .map(|t| {
            let (ix, iy, it) = frame_gradients(seq, t);
            let mut block = vec![0.0; regions * hist_len];
            for r in 1..=regions {
                let hist = &mut block[(r - 1) * hist_len..r * hist_len];
                for &i in mask.pixels(r) {
                    for (p, plane) in plane_list.iter().enumerate() {
                        let (a, b) = match plane {
                            Plane::XY => (ix[i], iy[i]),
                            Plane::XT => (ix[i], it[i]),
                            Plane::YT => (iy[i], it[i]),
                        };
                        let mag = a.hypot(b);
                        if mag > 0.0 {
                            vote(&mut hist[p * bins..(p + 1) * bins], b.atan2(a), mag);
                        }
                    }
                }
                let area = mask.area(r) as f64;
                hist.iter_mut().for_each(|v| *v /= area);
            }
            block
        })
        .collect();

    let mut data = vec![0.0; regions * frames * hist_len];
    for (t, block) in blocks.iter().enumerate() {
        for r in 0..regions {
            let dst = (r * frames + t) * hist_len;
            data[dst..dst + hist_len].copy_from_slice(&block[r * hist_len..(r + 1) * hist_len]);
        }
    }
    FeatureCube::new(Descriptor::HOG3D, Some(planes), bins, regions, frames, data)
}
