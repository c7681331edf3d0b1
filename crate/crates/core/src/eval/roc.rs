use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{metrics, spot_check, ConfusionCounts, RegionGroundTruth};
use crate::error::{Error, Result};
use crate::spotting::{Detection, SpotAnalysis, SpottingResult};

/// R values swept by default: 2, 4, ..., 26.
pub const DEFAULT_SWEEP: [usize; 13] = [2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    #[serde(rename = "R")]
    pub r: usize,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Points in sweep order.
    pub points: Vec<RocPoint>,
    pub counts: Vec<ConfusionCounts>,
    pub auc: f64,
}

/// Trapezoidal area under `(fpr, tpr)` points completed with (0,0) and (1,1),
/// integrated in ascending fpr (then tpr) order.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(points.len() + 2);
    pts.push((0.0, 0.0));
    pts.extend_from_slice(points);
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

impl RocCurve {
    pub fn from_counts(rs: &[usize], counts: Vec<ConfusionCounts>) -> Self {
        let points: Vec<RocPoint> = rs
            .iter()
            .zip(&counts)
            .map(|(&r, c)| {
                let m = metrics(c);
                RocPoint {
                    r,
                    fpr: m.fpr.unwrap_or(0.0),
                    tpr: m.recall.unwrap_or(0.0),
                }
            })
            .collect();
        let auc = auc(&points.iter().map(|p| (p.fpr, p.tpr)).collect::<Vec<_>>());
        Self {
            points,
            counts,
            auc,
        }
    }

    /// `R,fpr,tpr` rows, 4 decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("R,fpr,tpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{:.4},{:.4}\n", p.r, p.fpr, p.tpr));
        }
        out
    }
}

fn check_sweep(rs: &[usize]) -> Result<()> {
    if rs.is_empty() {
        return Err(Error::Config("R sweep is empty".into()));
    }
    Ok(())
}

/// Emits each clip at every R and accumulates counts.
pub fn roc_sweep(clips: &[(SpotAnalysis, RegionGroundTruth)], rs: &[usize]) -> Result<RocCurve> {
    check_sweep(rs)?;
    let counts = rs
        .iter()
        .map(|&r| {
            clips
                .iter()
                .map(|(a, g)| spot_check(&a.emit(r)?, g))
                .sum::<Result<ConfusionCounts>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve::from_counts(rs, counts))
}

/// Sweep over saved results that were emitted with every region ranked.
pub fn roc_from_results(
    clips: &[(SpottingResult, RegionGroundTruth)],
    rs: &[usize],
) -> Result<RocCurve> {
    check_sweep(rs)?;
    let counts = rs
        .iter()
        .map(|&r| {
            clips
                .iter()
                .map(|(res, g)| spot_check(&res.top(r)?, g))
                .sum::<Result<ConfusionCounts>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve::from_counts(rs, counts))
}

/// Chance-level control: regions ranked uniformly at random per clip, each
/// selected region emitting one detection at a random frame drawn from the
/// clip's annotated windows. Only the region choice is uninformed, so the curve
/// isolates the value of the ranking.
pub fn random_control(clips: &[RegionGroundTruth], rs: &[usize], seed: u64) -> Result<RocCurve> {
    check_sweep(rs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(Vec<u8>, Vec<usize>)> = clips
        .iter()
        .map(|g| {
            let mut order: Vec<u8> = (1..=g.windows.len() as u8).collect();
            order.shuffle(&mut rng);
            let frames: Vec<usize> = g
                .windows
                .iter()
                .flatten()
                .flat_map(|&(on, off)| on..=off)
                .collect();
            let apexes = order
                .iter()
                .map(|_| {
                    if frames.is_empty() {
                        rng.random_range(0..g.frames.max(1))
                    } else {
                        frames[rng.random_range(0..frames.len())]
                    }
                })
                .collect();
            (order, apexes)
        })
        .collect();
    let counts = rs
        .iter()
        .map(|&r| {
            clips
                .iter()
                .zip(&draws)
                .map(|(g, (order, apexes))| {
                    let detections = order
                        .iter()
                        .zip(apexes)
                        .take(r)
                        .map(|(&region_id, &apex)| Detection {
                            region_id,
                            onset: apex,
                            apex,
                            offset: apex,
                            height: 0.0,
                            abt: 0.0,
                        })
                        .collect();
                    let res = SpottingResult {
                        subject_id: String::new(),
                        clip_id: g.clip_id.clone(),
                        fps: 0.0,
                        frames: g.frames,
                        r,
                        regions: order[..r.min(order.len())].to_vec(),
                        abt: vec![0.0; g.windows.len()],
                        detections,
                    };
                    spot_check(&res, g)
                })
                .sum::<Result<ConfusionCounts>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve::from_counts(rs, counts))
}
