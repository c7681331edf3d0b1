use serde::{Deserialize, Serialize};

use super::signal::MicroInterval;
use crate::error::{Error, Result};

/// A detected local maximum. Frame indices are absolute within the clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// 0 for peaks found on an aggregated whole-face series.
    pub region_id: u8,
    pub onset: usize,
    pub apex: usize,
    pub offset: usize,
    /// Signal value at `apex`.
    pub height: f64,
    /// Full width at half maximum, in frames.
    pub width: f64,
    /// Sub-frame zero crossing of the smoothed derivative.
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    /// Triangular smoothing width for the derivative, in frames.
    pub smooth_width: usize,
    /// Minimum drop of the smoothed derivative across a crossing.
    pub slope_threshold: f64,
    /// Peaks closer than this (frames) are merged, keeping the higher.
    pub min_separation: usize,
}

impl PeakParams {
    /// Defaults tied to the micro-interval: smoothing k/2, separation k.
    pub fn for_interval(mi: MicroInterval) -> Self {
        Self {
            smooth_width: (mi.k() / 2).max(1),
            slope_threshold: 0.0,
            min_separation: mi.k(),
        }
    }
}

/// Moving triangular average of width `m` (two chained boxes), renormalized at the ends.
fn triangular_smooth(x: &[f64], m: usize) -> Vec<f64> {
    if m <= 1 {
        return x.to_vec();
    }
    let n = x.len() as isize;
    let m = m as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for j in -(m - 1)..=(m - 1) {
                let t = i + j;
                if (0..n).contains(&t) {
                    let w = (m - j.abs()) as f64;
                    acc += w * x[t as usize];
                    wsum += w;
                }
            }
            acc / wsum
        })
        .collect()
}

fn derivative(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| match (i, n) {
            (_, 0 | 1) => 0.0,
            (0, _) => x[1] - x[0],
            (i, n) if i == n - 1 => x[n - 1] - x[n - 2],
            (i, _) => (x[i + 1] - x[i - 1]) / 2.0,
        })
        .collect()
}

/// Half-maximum crossings around `apex`, as fractional indices.
fn half_max_extent(s: &[f64], apex: usize) -> (f64, f64) {
    let half = s[apex] / 2.0;
    let mut left = 0.0;
    for i in (0..apex).rev() {
        if s[i] < half {
            left = i as f64 + (half - s[i]) / (s[i + 1] - s[i]);
            break;
        }
    }
    let mut right = (s.len() - 1) as f64;
    for i in apex + 1..s.len() {
        if s[i] < half {
            right = (i - 1) as f64 + (s[i - 1] - half) / (s[i - 1] - s[i]);
            break;
        }
    }
    (left, right)
}

/// Peaks at downward zero crossings of the smoothed first derivative whose
/// height strictly exceeds `abt`. `start` is the absolute frame of `signal[0]`.
/// Onset and offset are set to the half-maximum extent; see [`peak_phases`].
pub fn detect_peaks(signal: &[f64], start: usize, abt: f64, params: &PeakParams) -> Vec<Peak> {
    if signal.len() < 2 {
        return Vec::new();
    }
    let d = triangular_smooth(&derivative(signal), params.smooth_width);
    let last = signal.len() - 1;
    let mut found: Vec<Peak> = Vec::new();
    for j in 0..last {
        if !(d[j] > 0.0 && d[j + 1] <= 0.0) || d[j] - d[j + 1] <= params.slope_threshold {
            continue;
        }
        let p = j as f64 + d[j] / (d[j] - d[j + 1]);
        let apex = (p.round() as usize).min(last);
        let height = signal[apex];
        if !(height > abt) || height <= 0.0 {
            continue;
        }
        let (left, right) = half_max_extent(signal, apex);
        found.push(Peak {
            region_id: 0,
            onset: start + left.floor() as usize,
            apex: start + apex,
            offset: start + (right.ceil() as usize).min(last),
            height,
            width: right - left,
            position: start as f64 + p,
        });
    }
    found.sort_by(|a, b| {
        b.height
            .total_cmp(&a.height)
            .then(a.position.total_cmp(&b.position))
    });
    let mut kept: Vec<Peak> = Vec::new();
    for peak in found {
        if kept
            .iter()
            .all(|k| (k.position - peak.position).abs() >= params.min_separation as f64)
        {
            kept.push(peak);
        }
    }
    kept.sort_by(|a, b| a.position.total_cmp(&b.position));
    kept
}

/// Distance from the peak position to where a Gaussian of FWHM `w` falls to
/// fraction `a` of its height: w * sqrt(ln(1/a)) / (2 sqrt(ln 2)).
pub fn phase_half_width(width: f64, a: f64) -> Result<f64> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::Config(format!("a must be in (0, 1], got {a}")));
    }
    Ok(width * (1.0 / a).ln().sqrt() / (2.0 * std::f64::consts::LN_2.sqrt()))
}

/// Onset and offset at `position -/+ delta`, rounded and clamped to `valid`
/// (inclusive first, exclusive end).
pub fn peak_phases(peak: &Peak, a: f64, valid: std::ops::Range<usize>) -> Result<(usize, usize)> {
    let delta = phase_half_width(peak.width, a)?;
    let lo = valid.start as f64;
    let hi = valid.end.saturating_sub(1).max(valid.start) as f64;
    let onset = (peak.position - delta).round().clamp(lo, hi) as usize;
    let offset = (peak.position + delta).round().clamp(lo, hi) as usize;
    Ok((onset.min(peak.apex), offset.max(peak.apex)))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn gaussian(n: usize, bumps: &[(f64, f64, f64)]) -> Vec<f64> {
        (0..n)
            .map(|i| {
                bumps
                    .iter()
                    .map(|&(h, c, s)| h * (-((i as f64 - c).powi(2)) / (2.0 * s * s)).exp())
                    .sum()
            })
            .collect()
    }

    fn params() -> PeakParams {
        PeakParams::for_interval(MicroInterval::new(21).unwrap())
    }

    #[test]
    fn flat_signal_has_no_peaks() {
        assert!(detect_peaks(&[0.0; 50], 0, 1.0, &params()).is_empty());
        assert!(detect_peaks(&[], 0, 1.0, &params()).is_empty());
    }

    #[test]
    fn single_gaussian() {
        let s = gaussian(200, &[(5.0, 100.0, 8.0)]);
        let peaks = detect_peaks(&s, 0, 1.0, &params());
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].apex as f64 - 100.0).abs() <= 1.0);
        let fwhm = 2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * 8.0;
        assert!((peaks[0].width - fwhm).abs() <= 0.15 * fwhm);
    }

    #[test]
    fn below_threshold_is_dropped() {
        let s = gaussian(200, &[(5.0, 100.0, 8.0)]);
        assert!(detect_peaks(&s, 0, 5.0, &params()).is_empty());
    }

    #[test]
    fn two_gaussians_in_order() {
        let s = gaussian(300, &[(5.0, 80.0, 6.0), (3.0, 200.0, 6.0)]);
        let peaks = detect_peaks(&s, 10, 1.0, &params());
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0].apex as f64 - 90.0).abs() <= 1.0);
        assert!((peaks[1].apex as f64 - 210.0).abs() <= 1.0);
    }

    #[test]
    fn close_peaks_merge_to_higher() {
        let s = gaussian(200, &[(5.0, 90.0, 2.0), (4.0, 100.0, 2.0)]);
        let p = PeakParams {
            smooth_width: 1,
            slope_threshold: 0.0,
            min_separation: 20,
        };
        let peaks = detect_peaks(&s, 0, 1.0, &p);
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].apex, 90);
    }

    #[test]
    fn phase_widths() {
        assert!((phase_half_width(1.0, 0.01).unwrap() - 1.288784).abs() < 1e-6);
        assert_eq!(phase_half_width(7.0, 1.0).unwrap(), 0.0);
        // a = 1/2 lands on the half-maximum points by construction.
        assert!((phase_half_width(10.0, 0.5).unwrap() - 5.0).abs() < 1e-12);
        assert!(phase_half_width(1.0, 0.0).unwrap_err().is_config());
        assert!(phase_half_width(1.0, 1.5).is_err());
    }

    #[test]
    fn phases_are_clamped() {
        let peak = Peak {
            region_id: 1,
            onset: 0,
            apex: 12,
            offset: 0,
            height: 1.0,
            width: 10.0,
            position: 12.2,
        };
        assert_eq!(peak_phases(&peak, 1.0, 0..100).unwrap(), (12, 12));
        assert_eq!(peak_phases(&peak, 0.01, 0..100).unwrap(), (0, 25));
        assert_eq!(peak_phases(&peak, 0.01, 5..20).unwrap(), (5, 19));
    }

    proptest! {
        #[test]
        fn gaussian_recovery(h in 1.0f64..10.0, c in 60.0f64..140.0, s in 3.0f64..12.0) {
            let sig = gaussian(200, &[(h, c, s)]);
            let peaks = detect_peaks(&sig, 0, 0.5, &params());
            prop_assert_eq!(peaks.len(), 1);
            let fwhm = 2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * s;
            prop_assert!((peaks[0].position - c).abs() <= 1.0);
            prop_assert!((peaks[0].width - fwhm).abs() <= 0.15 * fwhm);
            let (on, off) = peak_phases(&peaks[0], 0.01, 0..200).unwrap();
            prop_assert!(on <= peaks[0].apex && peaks[0].apex <= off);
        }
    }
}
