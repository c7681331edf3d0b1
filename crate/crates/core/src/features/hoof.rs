use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_inputs, Descriptor, FeatureCube};
use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence};
use crate::geometry::RegionMask;

/// Histograms whose total flow magnitude falls below this are left unnormalized.
const MIN_FLOW_MASS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMethod {
    HornSchunck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoofParams {
    pub method: FlowMethod,
    /// Smoothness weight, on a 0-255 intensity scale.
    pub alpha: f64,
    pub iterations: usize,
}

impl Default for HoofParams {
    fn default() -> Self {
        Self {
            method: FlowMethod::HornSchunck,
            alpha: 15.0,
            iterations: 100,
        }
    }
}

impl HoofParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "flow alpha must be > 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Dense flow field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Horn-Schunck flow from `a` to `b`. Intensities are scaled from [0, 1] to
/// [0, 255] so `alpha` keeps its conventional meaning.
pub fn horn_schunck(a: &Frame, b: &Frame, alpha: f64, iterations: usize) -> Flow {
    let (w, h) = a.dims();
    let at = |f: &Frame, x: usize, y: usize| 255.0 * f.get(x.min(w - 1), y.min(h - 1));
    let n = w * h;
    let (mut ex, mut ey, mut et) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut sx = 0.0;
            let mut sy = 0.0;
            let mut st = 0.0;
            for f in [a, b] {
                sx += at(f, x + 1, y) - at(f, x, y) + at(f, x + 1, y + 1) - at(f, x, y + 1);
                sy += at(f, x, y + 1) - at(f, x, y) + at(f, x + 1, y + 1) - at(f, x + 1, y);
            }
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                st += at(b, x + dx, y + dy) - at(a, x + dx, y + dy);
            }
            ex[i] = sx / 4.0;
            ey[i] = sy / 4.0;
            et[i] = st / 4.0;
        }
    }
    let a2 = alpha * alpha;
    let denom: Vec<f64> = (0..n).map(|i| a2 + ex[i] * ex[i] + ey[i] * ey[i]).collect();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut ubar = vec![0.0; n];
    let mut vbar = vec![0.0; n];
    for _ in 0..iterations {
        local_average(&u, w, h, &mut ubar);
        local_average(&v, w, h, &mut vbar);
        for i in 0..n {
            let k = (ex[i] * ubar[i] + ey[i] * vbar[i] + et[i]) / denom[i];
            u[i] = ubar[i] - ex[i] * k;
            v[i] = vbar[i] - ey[i] * k;
        }
    }
    Flow {
        width: w,
        height: h,
        u,
        v,
    }
}

/// Weighted neighbourhood mean: 1/6 for edge neighbours, 1/12 for corners, clamped borders.
fn local_average(f: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let edge = f[y * w + xm] + f[y * w + xp] + f[ym * w + x] + f[yp * w + x];
            let corner = f[ym * w + xm] + f[ym * w + xp] + f[yp * w + xm] + f[yp * w + xp];
            out[y * w + x] = edge / 6.0 + corner / 12.0;
        }
    }
}

/// Orientation bin of a flow vector. Left and right motion mirror onto the same
/// bins; bins span [-pi/2, pi/2] from straight down (image y up) to straight up.
#[inline]
fn flow_bin(u: f64, v: f64, bins: usize) -> usize {
    let theta = v.atan2(u.abs());
    (((theta + PI / 2.0) / PI * bins as f64).floor() as usize).min(bins - 1)
}

/// Histograms of oriented flow per region. Frame 0 has no predecessor and is all zeros.
pub fn hoof(
    seq: &FrameSequence,
    mask: &RegionMask,
    bins: usize,
    params: &HoofParams,
) -> Result<FeatureCube> {
    check_inputs(seq, mask)?;
    params.validate()?;
    if bins < 1 {
        return Err(Error::Config("HOOF needs at least 1 bin".into()));
    }
    let regions = mask.region_count();
    let n = seq.len();
    let blocks: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|t| {
            let mut block = vec![0.0; regions * bins];
            if t == 0 {
                return block;
            }
            let flow = horn_schunck(
                seq.frame(t - 1),
                seq.frame(t),
                params.alpha,
                params.iterations,
            );
            for r in 1..=regions {
                let hist = &mut block[(r - 1) * bins..r * bins];
                for &i in mask.pixels(r) {
                    let (u, v) = (flow.u[i], flow.v[i]);
                    let mag = u.hypot(v);
                    if mag > 0.0 {
                        hist[flow_bin(u, v, bins)] += mag;
                    }
                }
                let total: f64 = hist.iter().sum();
                let scale = if total > MIN_FLOW_MASS { total } else { 1.0 } * mask.area(r) as f64;
                hist.iter_mut().for_each(|v| *v /= scale);
            }
            block
        })
        .collect();
    let mut data = vec![0.0; regions * n * bins];
    for (t, block) in blocks.iter().enumerate() {
        for r in 0..regions {
            let dst = (r * n + t) * bins;
            data[dst..dst + bins].copy_from_slice(&block[r * bins..(r + 1) * bins]);
        }
    }
    FeatureCube::new(Descriptor::HOOF, None, bins, regions, n, data)
}
