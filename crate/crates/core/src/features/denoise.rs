use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiseMethod {
    None,
    TemporalGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    pub method: DenoiseMethod,
    /// Standard deviation in frames.
    pub sigma: f64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            method: DenoiseMethod::TemporalGaussian,
            sigma: 1.0,
        }
    }
}

impl DenoiseConfig {
    pub fn none() -> Self {
        Self {
            method: DenoiseMethod::None,
            sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == DenoiseMethod::TemporalGaussian
            && !(self.sigma > 0.0 && self.sigma.is_finite())
        {
            return Err(Error::Config(format!(
                "denoise sigma must be > 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Sampled Gaussian truncated at ceil(3 sigma), normalized to unit sum.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Temporal smoothing with edge-replicated ends. Same size and frame count out.
pub fn denoise(seq: &FrameSequence, cfg: &DenoiseConfig) -> Result<FrameSequence> {
    cfg.validate()?;
    if cfg.method == DenoiseMethod::None || seq.len() < 2 {
        return Ok(seq.clone());
    }
    let kernel = gaussian_kernel(cfg.sigma);
    let radius = (kernel.len() / 2) as isize;
    let n = seq.len() as isize;
    let (w, h) = seq.dims();
    let frames = (0..n)
        .map(|t| {
            let mut out = vec![0.0; w * h];
            for (j, &wk) in kernel.iter().enumerate() {
                let s = (t + j as isize - radius).clamp(0, n - 1) as usize;
                for (o, &v) in out.iter_mut().zip(seq.frame(s).data()) {
                    *o += wk * v;
                }
            }
            Frame::new(w, h, out).expect("dims match")
        })
        .collect();
    seq.with_frames(frames)
}
