//! Chi-square difference analysis, contrasting, adaptive thresholds and peak finding.

mod peaks;
mod signal;
mod threshold;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use peaks::{detect_peaks, peak_phases, phase_half_width, Peak, PeakParams};
pub use signal::{
    chi_square, contrast, contrast_value, difference_signal, top_r_aggregate, DifferenceSignal,
    MicroInterval,
};
pub use threshold::{
    adaptive_threshold, baseline_profile, baseline_profile_segments, BaselineProfile,
};

use crate::error::{Error, Result};
use crate::features::FeatureCube;
use crate::frame::SequenceInfo;
use crate::geometry::REGION_COUNT;

/// Spotting parameters. Peak-detector fields left unset derive from k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpotConfig {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub a: f64,
    pub smooth_width: Option<usize>,
    pub slope_threshold: f64,
    pub min_separation: Option<usize>,
    pub micro_max_ms: f64,
}

impl Default for SpotConfig {
    fn default() -> Self {
        Self {
            n: 71,
            r: 12,
            a: 0.01,
            smooth_width: None,
            slope_threshold: 0.0,
            min_separation: None,
            micro_max_ms: 500.0,
        }
    }
}

impl SpotConfig {
    pub fn validate(&self) -> Result<()> {
        MicroInterval::new(self.n)?;
        if !(1..=REGION_COUNT).contains(&self.r) {
            return Err(Error::Config(format!(
                "R must be in 1..={REGION_COUNT}, got {}",
                self.r
            )));
        }
        phase_half_width(1.0, self.a)?;
        if !(self.micro_max_ms > 0.0) {
            return Err(Error::Config(format!(
                "micro_max_ms must be > 0, got {}",
                self.micro_max_ms
            )));
        }
        if self.smooth_width == Some(0) {
            return Err(Error::Config("smooth_width must be >= 1".into()));
        }
        Ok(())
    }

    pub fn micro_interval(&self) -> Result<MicroInterval> {
        MicroInterval::new(self.n)
    }

    pub fn peak_params(&self) -> Result<PeakParams> {
        let defaults = PeakParams::for_interval(self.micro_interval()?);
        Ok(PeakParams {
            smooth_width: self.smooth_width.unwrap_or(defaults.smooth_width),
            slope_threshold: self.slope_threshold,
            min_separation: self.min_separation.unwrap_or(defaults.min_separation),
        })
    }
}

/// Everything about one clip that does not depend on R.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotAnalysis {
    pub subject_id: String,
    pub clip_id: String,
    pub fps: f64,
    pub frames: usize,
    pub signal: DifferenceSignal,
    pub profile: BaselineProfile,
    /// Region ids by descending maximum contrasted value, ties to the lower id.
    pub ranking: Vec<u8>,
    /// Micro-duration peaks per region (index 0 is region 1), phases assigned.
    pub peaks: Vec<Vec<Peak>>,
}

/// One emitted detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub region_id: u8,
    pub onset: usize,
    pub apex: usize,
    pub offset: usize,
    pub height: f64,
    pub abt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpottingResult {
    pub subject_id: String,
    pub clip_id: String,
    pub fps: f64,
    pub frames: usize,
    #[serde(rename = "R")]
    pub r: usize,
    /// The R regions allowed to emit, in rank order.
    pub regions: Vec<u8>,
    /// Threshold per region, index 0 is region 1.
    pub abt: Vec<f64>,
    pub detections: Vec<Detection>,
}

impl SpottingResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("spotting result: {e}")))
    }

    /// The result this clip would give at a smaller R.
    pub fn top(&self, r: usize) -> Result<SpottingResult> {
        if r < 1 || r > self.r || r > self.regions.len() {
            return Err(Error::Config(format!(
                "cannot restrict a result emitted at R={} to R={r}",
                self.r
            )));
        }
        let regions = self.regions[..r].to_vec();
        Ok(SpottingResult {
            r,
            detections: self
                .detections
                .iter()
                .filter(|d| regions.contains(&d.region_id))
                .cloned()
                .collect(),
            regions,
            ..self.clone()
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn check_compatible(a: &FeatureCube, b: &FeatureCube) -> Result<()> {
    if a.descriptor() != b.descriptor()
        || a.planes() != b.planes()
        || a.bins() != b.bins()
        || a.regions() != b.regions()
    {
        return Err(Error::Mismatch(format!(
            "movement features are {} {:?} B={} x{} regions, baseline {} {:?} B={} x{}",
            a.descriptor(),
            a.planes(),
            a.bins(),
            a.regions(),
            b.descriptor(),
            b.planes(),
            b.bins(),
            b.regions()
        )));
    }
    Ok(())
}

/// Runs the R-independent part of spotting: difference signal, contrast,
/// per-region thresholds, peak detection, phases and the micro-duration filter.
pub fn analyze(
    movement: &FeatureCube,
    baseline: &[&FeatureCube],
    info: &SequenceInfo,
    cfg: &SpotConfig,
) -> Result<SpotAnalysis> {
    cfg.validate()?;
    for b in baseline {
        check_compatible(movement, b)?;
    }
    let mi = cfg.micro_interval()?;
    if movement.frames() < mi.min_contrast_frames() {
        return Err(Error::TooShort(format!(
            "clip has {} frames; spotting needs at least 4k+1 = {}",
            movement.frames(),
            mi.min_contrast_frames()
        )));
    }
    let signal = contrast(&difference_signal(movement, mi)?);
    let profile = baseline_profile_segments(baseline, &signal, mi)?;
    let params = cfg.peak_params()?;
    let max_len = cfg.micro_max_ms / 1000.0 * info.fps;
    let valid = signal.valid_range();

    let peaks = (1..=signal.regions())
        .map(|r| {
            detect_peaks(signal.series(r), valid.start, profile.abt(r), &params)
                .into_iter()
                .map(|mut p| {
                    p.region_id = r as u8;
                    let (on, off) = peak_phases(&p, cfg.a, valid.clone())?;
                    p.onset = on;
                    p.offset = off;
                    Ok(p)
                })
                .filter(|p: &Result<Peak>| {
                    p.as_ref()
                        .map_or(true, |p| (p.offset - p.onset) as f64 <= max_len)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ranking: Vec<u8> = (1..=signal.regions() as u8).collect();
    ranking.sort_by(|&a, &b| {
        signal
            .max(b as usize)
            .total_cmp(&signal.max(a as usize))
            .then(a.cmp(&b))
    });

    Ok(SpotAnalysis {
        subject_id: info.subject_id.clone(),
        clip_id: info.clip_id.clone(),
        fps: info.fps,
        frames: movement.frames(),
        signal,
        profile,
        ranking,
        peaks,
    })
}

impl SpotAnalysis {
    /// Detections from the top `r` ranked regions, ordered by apex then region.
    pub fn emit(&self, r: usize) -> Result<SpottingResult> {
        if r < 1 || r > self.ranking.len() {
            return Err(Error::Config(format!(
                "R must be in 1..={}, got {r}",
                self.ranking.len()
            )));
        }
        let regions: Vec<u8> = self.ranking[..r].to_vec();
        let mut detections: Vec<Detection> = regions
            .iter()
            .flat_map(|&id| {
                self.peaks[id as usize - 1].iter().map(move |p| Detection {
                    region_id: id,
                    onset: p.onset,
                    apex: p.apex,
                    offset: p.offset,
                    height: p.height,
                    abt: self.profile.abt(id as usize),
                })
            })
            .collect();
        detections.sort_by(|a, b| a.apex.cmp(&b.apex).then(a.region_id.cmp(&b.region_id)));
        Ok(SpottingResult {
            subject_id: self.subject_id.clone(),
            clip_id: self.clip_id.clone(),
            fps: self.fps,
            frames: self.frames,
            r,
            regions,
            abt: self.profile.abt.clone(),
            detections,
        })
    }
}

/// Full spotting of one clip at the configured R.
pub fn spot(
    movement: &FeatureCube,
    baseline: &[&FeatureCube],
    info: &SequenceInfo,
    cfg: &SpotConfig,
) -> Result<SpottingResult> {
    analyze(movement, baseline, info, cfg)?.emit(cfg.r)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::features::Descriptor;

    fn info() -> SequenceInfo {
        SequenceInfo {
            fps: 200.0,
            subject_id: "s01".into(),
            clip_id: "c01".into(),
            neutral_pad: 0,
        }
    }

    /// Two-bin histograms: uniform noise of size `wobble` with optional Gaussian bursts.
    fn cube(
        frames: usize,
        events: &[(usize, f64, f64, f64)],
        wobble: f64,
        seed: u64,
    ) -> FeatureCube {
        let regions = 26;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(regions * frames * 2);
        for r in 1..=regions {
            for t in 0..frames {
                let mut a = 1.0 + wobble * rng.random::<f64>();
                for &(reg, centre, sigma, amp) in events {
                    if reg == r {
                        a += amp * (-((t as f64 - centre).powi(2)) / (2.0 * sigma * sigma)).exp();
                    }
                }
                data.push(a);
                data.push(1.0);
            }
        }
        FeatureCube::new(Descriptor::HOOF, None, 2, regions, frames, data).unwrap()
    }

    #[test]
    fn baseline_equal_to_movement_emits_nothing() {
        let c = cube(200, &[], 0.1, 1);
        let cfg = SpotConfig {
            n: 21,
            ..SpotConfig::default()
        };
        let res = spot(&c, &[&c], &info(), &cfg).unwrap();
        assert!(res.detections.is_empty());
    }

    #[test]
    fn injected_event_in_region_7() {
        let movement = cube(200, &[(7, 100.0, 3.0, 2.0)], 0.3, 2);
        let baseline = cube(4000, &[], 0.3, 3);
        let cfg = SpotConfig {
            n: 21,
            r: 1,
            ..SpotConfig::default()
        };
        let analysis = analyze(&movement, &[&baseline], &info(), &cfg).unwrap();
        assert_eq!(analysis.ranking[0], 7);
        for r in [1, 12, 26] {
            let res = analysis.emit(r).unwrap();
            if r == 1 {
                assert!(
                    res.detections.iter().all(|d| d.region_id == 7),
                    "{:?}",
                    res.detections
                );
            }
            // Negative regions may still cross their own threshold by chance.
            let d = res
                .detections
                .iter()
                .max_by(|a, b| a.height.total_cmp(&b.height))
                .unwrap();
            assert_eq!(d.region_id, 7);
            assert!((98..=102).contains(&d.apex));
            assert!(d.height > d.abt);
            // The event lifts the movement mean above max(rho), so region 7 takes the
            // second threshold branch and lets its weaker noise peaks through too.
            assert!(analysis.profile.baseline_max[6] <= analysis.profile.movement_mean[6]);
        }
    }

    #[test]
    fn long_event_is_filtered() {
        // A plateau pulse 0.8 s long at 200 fps has a wide contrasted response.
        let peak = Peak {
            region_id: 1,
            onset: 0,
            apex: 100,
            offset: 0,
            height: 1.0,
            width: 70.0,
            position: 100.0,
        };
        let (on, off) = peak_phases(&peak, 0.01, 0..400).unwrap();
        assert!((off - on) as f64 > 0.5 * 200.0);
        let movement = cube(400, &[(4, 200.0, 40.0, 3.0)], 0.0, 4);
        let baseline = cube(400, &[], 0.0, 5);
        let cfg = SpotConfig {
            n: 21,
            r: 26,
            ..SpotConfig::default()
        };
        let analysis = analyze(&movement, &[&baseline], &info(), &cfg).unwrap();
        assert!(analysis.peaks[3]
            .iter()
            .all(|p| (p.offset - p.onset) <= 100));
    }

    #[test]
    fn emitted_sets_grow_with_r() {
        let movement = cube(
            300,
            &[
                (3, 80.0, 3.0, 2.0),
                (9, 150.0, 3.0, 1.5),
                (20, 220.0, 3.0, 1.2),
            ],
            0.2,
            6,
        );
        let baseline = cube(4000, &[], 0.2, 7);
        let cfg = SpotConfig {
            n: 21,
            ..SpotConfig::default()
        };
        let analysis = analyze(&movement, &[&baseline], &info(), &cfg).unwrap();
        let full = analysis.emit(26).unwrap();
        let mut prev: Vec<Detection> = Vec::new();
        for r in 1..=26 {
            let res = analysis.emit(r).unwrap();
            assert_eq!(full.top(r).unwrap(), res);
            assert!(prev.iter().all(|d| res.detections.contains(d)));
            prev = res.detections;
        }
        for id in [3, 9, 20] {
            assert!(prev.iter().any(|d| d.region_id == id));
        }
    }

    #[test]
    fn result_json_round_trip() {
        let movement = cube(200, &[(7, 100.0, 3.0, 2.0)], 0.3, 8);
        let baseline = cube(200, &[], 0.3, 9);
        let cfg = SpotConfig {
            n: 21,
            ..SpotConfig::default()
        };
        let res = spot(&movement, &[&baseline], &info(), &cfg).unwrap();
        assert_eq!(SpottingResult::from_json(&res.to_json()).unwrap(), res);
        assert_eq!(res, spot(&movement, &[&baseline], &info(), &cfg).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(SpotConfig {
            n: 70,
            ..SpotConfig::default()
        }
        .validate()
        .unwrap_err()
        .is_config());
        assert!(SpotConfig {
            r: 27,
            ..SpotConfig::default()
        }
        .validate()
        .is_err());
        assert!(SpotConfig {
            a: 0.0,
            ..SpotConfig::default()
        }
        .validate()
        .is_err());
        let cfg: SpotConfig = toml::from_str("N = 21\nR = 4\n").unwrap();
        assert_eq!((cfg.n, cfg.r, cfg.a), (21, 4, 0.01));
        assert!(toml::from_str::<SpotConfig>("bogus = 1").is_err());
    }

    #[test]
    fn too_short_clip() {
        let c = cube(100, &[], 0.0, 10);
        let err = spot(&c, &[&c], &info(), &SpotConfig::default()).unwrap_err();
        assert!(err.to_string().contains("4k+1 = 141"), "{err}");
    }
}
