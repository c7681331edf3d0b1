use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureCube;

/// Odd comparison window N and its half-width k = (N - 1) / 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicroInterval {
    n: usize,
    k: usize,
}

impl MicroInterval {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 || n % 2 == 0 {
            return Err(Error::Config(format!("N must be odd and >= 3, got {n}")));
        }
        Ok(Self { n, k: (n - 1) / 2 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Frames needed for one contrasted value.
    pub fn min_contrast_frames(&self) -> usize {
        4 * self.k + 1
    }
}

/// Chi-square histogram distance; bins empty in both histograms contribute 0.
pub fn chi_square(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Mismatch(format!(
            "histograms have {} and {} bins",
            p.len(),
            q.len()
        )));
    }
    Ok(chi_square_unchecked(p, q))
}

#[inline]
fn chi_square_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let s = a + b;
            if s == 0.0 {
                0.0
            } else {
                (a - b) * (a - b) / s
            }
        })
        .sum()
}

/// Per-region difference values over time. `raw` is defined on `raw_range`,
/// contrasted `values` on `contrast_range`; both are stored full-length with
/// zeros outside their ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceSignal {
    regions: usize,
    frames: usize,
    k: usize,
    raw: Vec<f64>,
    values: Vec<f64>,
    raw_range: Range<usize>,
    contrast_range: Range<usize>,
}

impl DifferenceSignal {
    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn raw_range(&self) -> Range<usize> {
        self.raw_range.clone()
    }

    /// Frames where contrasted values exist; empty before [`contrast`] or when too short.
    pub fn valid_range(&self) -> Range<usize> {
        self.contrast_range.clone()
    }

    pub fn raw(&self, region: usize, frame: usize) -> Option<f64> {
        self.raw_range
            .contains(&frame)
            .then(|| self.raw[(region - 1) * self.frames + frame])
    }

    pub fn value(&self, region: usize, frame: usize) -> Option<f64> {
        self.contrast_range
            .contains(&frame)
            .then(|| self.values[(region - 1) * self.frames + frame])
    }

    /// Raw D values of `region` over [`Self::raw_range`].
    pub fn raw_series(&self, region: usize) -> &[f64] {
        let base = (region - 1) * self.frames;
        &self.raw[base + self.raw_range.start..base + self.raw_range.end]
    }

    /// Contrasted values of `region` over [`Self::valid_range`].
    pub fn series(&self, region: usize) -> &[f64] {
        let base = (region - 1) * self.frames;
        &self.values[base + self.contrast_range.start..base + self.contrast_range.end]
    }

    /// Largest contrasted value of `region`, 0 when none is defined.
    pub fn max(&self, region: usize) -> f64 {
        self.series(region).iter().copied().fold(0.0, f64::max)
    }

    /// Mean contrasted value of `region`, 0 when none is defined.
    pub fn mean(&self, region: usize) -> f64 {
        let s = self.series(region);
        if s.is_empty() {
            0.0
        } else {
            s.iter().sum::<f64>() / s.len() as f64
        }
    }

    /// Builds an already-contrasted signal with every frame valid.
    pub fn from_values(series: &[Vec<f64>], k: usize) -> Result<Self> {
        let mut s = Self::from_raw(series, k)?;
        s.values = s.raw.clone();
        s.raw_range = 0..s.frames;
        s.contrast_range = 0..s.frames;
        Ok(s)
    }

    /// Builds a signal from per-region raw series, for tests and tools.
    pub fn from_raw(raw_series: &[Vec<f64>], k: usize) -> Result<Self> {
        let frames = raw_series.first().map_or(0, Vec::len);
        if raw_series.iter().any(|s| s.len() != frames) {
            return Err(Error::Mismatch("raw series differ in length".into()));
        }
        Ok(Self {
            regions: raw_series.len(),
            frames,
            k,
            raw: raw_series.concat(),
            values: vec![0.0; raw_series.len() * frames],
            raw_range: k.min(frames)..frames.saturating_sub(k).max(k.min(frames)),
            contrast_range: 0..0,
        })
    }
}

/// D[r, i] = chi2(F[r, i], (F[r, i-k] + F[r, i+k]) / 2) for i in [k, n-1-k].
pub fn difference_signal(cube: &FeatureCube, mi: MicroInterval) -> Result<DifferenceSignal> {
    let k = mi.k();
    let n = cube.frames();
    if n < 2 * k + 1 {
        return Err(Error::TooShort(format!(
            "{n} frames; the difference signal needs at least 2k+1 = {}",
            2 * k + 1
        )));
    }
    let regions = cube.regions();
    let mut raw = vec![0.0; regions * n];
    let mut avg = vec![0.0; cube.hist_len()];
    for r in 1..=regions {
        for i in k..n - k {
            let (a, b) = (cube.hist(r, i - k), cube.hist(r, i + k));
            for ((m, x), y) in avg.iter_mut().zip(a).zip(b) {
                *m = (x + y) / 2.0;
            }
            raw[(r - 1) * n + i] = chi_square_unchecked(cube.hist(r, i), &avg);
        }
    }
    Ok(DifferenceSignal {
        regions,
        frames: n,
        k,
        raw,
        values: vec![0.0; regions * n],
        raw_range: k..n - k,
        contrast_range: 0..0,
    })
}

/// F'[i] = max(0, F[i] - (F[i-k] + F[i+k]) / 2) over [2k, n-1-2k], per region.
pub fn contrast(signal: &DifferenceSignal) -> DifferenceSignal {
    let (n, k) = (signal.frames, signal.k);
    let start = signal.raw_range.start + k;
    let end = signal.raw_range.end.saturating_sub(k).max(start);
    let mut values = vec![0.0; signal.regions * n];
    for r in 0..signal.regions {
        let raw = &signal.raw[r * n..(r + 1) * n];
        for i in start..end {
            values[r * n + i] = contrast_value(raw[i], raw[i - k], raw[i + k]);
        }
    }
    DifferenceSignal {
        values,
        contrast_range: start..end,
        ..signal.clone()
    }
}

#[inline]
pub fn contrast_value(current: f64, before: f64, after: f64) -> f64 {
    (current - 0.5 * (before + after)).max(0.0)
}

/// Per frame, the sum of the `r` largest region values (ties to the lower region id).
pub fn top_r_aggregate(signal: &DifferenceSignal, r: usize) -> Result<Vec<f64>> {
    if r < 1 || r > signal.regions {
        return Err(Error::Config(format!(
            "R must be in 1..={}, got {r}",
            signal.regions
        )));
    }
    let mut buf: Vec<(f64, usize)> = Vec::with_capacity(signal.regions);
    Ok(signal
        .valid_range()
        .map(|i| {
            buf.clear();
            buf.extend((1..=signal.regions).map(|reg| (signal.value(reg, i).unwrap(), reg)));
            buf.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            buf[..r].iter().map(|v| v.0).sum()
        })
        .collect())
}
