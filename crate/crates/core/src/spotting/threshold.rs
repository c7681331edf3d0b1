use serde::{Deserialize, Serialize};

use super::signal::{contrast, difference_signal, DifferenceSignal, MicroInterval};
use crate::error::{Error, Result};
use crate::features::FeatureCube;

/// Per-region baseline statistics and the resulting adaptive thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineProfile {
    /// max(rho) per region.
    pub baseline_max: Vec<f64>,
    /// mean(rho) per region.
    pub baseline_mean: Vec<f64>,
    /// mean(epsilon), the movement signal mean, per region.
    pub movement_mean: Vec<f64>,
    pub abt: Vec<f64>,
}

impl BaselineProfile {
    /// Threshold of `region` (1-based).
    pub fn abt(&self, region: usize) -> f64 {
        self.abt[region - 1]
    }
}

/// max(rho) when it exceeds the movement mean, otherwise the mean of both means.
pub fn adaptive_threshold(rho_max: f64, rho_mean: f64, eps_mean: f64) -> f64 {
    if rho_max > eps_mean {
        rho_max
    } else {
        (eps_mean + rho_mean) / 2.0
    }
}

/// Thresholds from a baseline cube processed exactly like the movement.
pub fn baseline_profile(
    baseline: &FeatureCube,
    movement: &DifferenceSignal,
    mi: MicroInterval,
) -> Result<BaselineProfile> {
    baseline_profile_segments(&[baseline], movement, mi)
}

/// As [`baseline_profile`], pooling rho over several independent baseline
/// segments (for example the neutral frames before and after a movement).
/// Each segment is contrasted on its own so no artificial junction is compared.
pub fn baseline_profile_segments(
    segments: &[&FeatureCube],
    movement: &DifferenceSignal,
    mi: MicroInterval,
) -> Result<BaselineProfile> {
    let need = mi.min_contrast_frames();
    if segments.is_empty() {
        return Err(Error::TooShort("no baseline frames".into()));
    }
    let regions = movement.regions();
    let mut maxes = vec![0.0f64; regions];
    let mut sums = vec![0.0f64; regions];
    let mut count = 0usize;
    for seg in segments {
        if seg.frames() < need {
            return Err(Error::TooShort(format!(
                "baseline has {} frames; at least 4k+1 = {need} are needed",
                seg.frames()
            )));
        }
        if seg.regions() != regions {
            return Err(Error::Mismatch(format!(
                "baseline has {} regions, movement {regions}",
                seg.regions()
            )));
        }
        let rho = contrast(&difference_signal(seg, mi)?);
        count += rho.valid_range().len();
        for r in 1..=regions {
            let s = rho.series(r);
            maxes[r - 1] = s.iter().copied().fold(maxes[r - 1], f64::max);
            sums[r - 1] += s.iter().sum::<f64>();
        }
    }
    let baseline_mean: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
    let movement_mean: Vec<f64> = (1..=regions).map(|r| movement.mean(r)).collect();
    let abt = (0..regions)
        .map(|i| adaptive_threshold(maxes[i], baseline_mean[i], movement_mean[i]))
        .collect();
    Ok(BaselineProfile {
        baseline_max: maxes,
        baseline_mean,
        movement_mean,
        abt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Descriptor;

    fn stats(v: &[f64]) -> (f64, f64) {
        (
            v.iter().copied().fold(f64::MIN, f64::max),
            v.iter().sum::<f64>() / v.len() as f64,
        )
    }

    #[test]
    fn first_branch() {
        let (max, mean) = stats(&[1.0, 2.0, 3.0]);
        assert_eq!(adaptive_threshold(max, mean, 2.5), 3.0);
    }

    #[test]
    fn second_branch() {
        let (max, mean) = stats(&[0.5, 0.5]);
        assert_eq!(adaptive_threshold(max, mean, 4.0), 2.25);
    }

    #[test]
    fn degenerate_zero() {
        assert_eq!(adaptive_threshold(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn short_baseline_rejected() {
        let mi = MicroInterval::new(5).unwrap();
        let cube = FeatureCube::new(Descriptor::HOOF, None, 1, 1, 8, vec![1.0; 8]).unwrap();
        let movement = contrast(
            &difference_signal(
                &FeatureCube::new(Descriptor::HOOF, None, 1, 1, 9, vec![1.0; 9]).unwrap(),
                mi,
            )
            .unwrap(),
        );
        let err = baseline_profile(&cube, &movement, mi).unwrap_err();
        assert!(err.to_string().contains("4k+1 = 9"), "{err}");
    }

    #[test]
    fn identical_baseline_gives_its_own_max() {
        let mi = MicroInterval::new(3).unwrap();
        let data: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64 + 0.5).collect();
        let cube = FeatureCube::new(Descriptor::HOOF, None, 1, 1, 20, data).unwrap();
        let movement = contrast(&difference_signal(&cube, mi).unwrap());
        let profile = baseline_profile(&cube, &movement, mi).unwrap();
        assert_eq!(profile.abt(1), movement.max(1));
    }
}
