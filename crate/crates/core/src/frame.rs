//! Grayscale frames and frame sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single grayscale image, row-major, intensities nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Mismatch(format!(
                "frame buffer has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Value at integer coordinates clamped into the image (edge replication).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Bilinear sample with edge replication outside the image.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let v00 = self.get_clamped(xi, yi);
        let v10 = self.get_clamped(xi + 1, yi);
        let v01 = self.get_clamped(xi, yi + 1);
        let v11 = self.get_clamped(xi + 1, yi + 1);
        let top = v00 + (v10 - v00) * fx;
        let bottom = v01 + (v11 - v01) * fx;
        top + (bottom - top) * fy
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Frame) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Identity and timing metadata of a clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceInfo {
    pub fps: f64,
    pub subject_id: String,
    pub clip_id: String,
    /// Neutral frames padded before and after the movement. Metadata only.
    #[serde(default)]
    pub neutral_pad: usize,
}

/// An ordered run of equally sized grayscale frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Frame>,
    info: SequenceInfo,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, info: SequenceInfo) -> Result<Self> {
        if !(info.fps > 0.0) || !info.fps.is_finite() {
            return Err(Error::Validation(format!(
                "fps must be > 0, got {}",
                info.fps
            )));
        }
        if let Some(first) = frames.first() {
            for (i, f) in frames.iter().enumerate().skip(1) {
                if f.dims() != first.dims() {
                    return Err(Error::Validation(format!(
                        "frame {i} is {}x{}, expected {}x{}",
                        f.width(),
                        f.height(),
                        first.width(),
                        first.height()
                    )));
                }
            }
        }
        Ok(Self { frames, info })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn info(&self) -> &SequenceInfo {
        &self.info
    }

    pub fn fps(&self) -> f64 {
        self.info.fps
    }

    pub fn width(&self) -> usize {
        self.frames.first().map_or(0, Frame::width)
    }

    pub fn height(&self) -> usize {
        self.frames.first().map_or(0, Frame::height)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    /// Same metadata, new frames. Frames must share the original dimensions.
    pub fn with_frames(&self, frames: Vec<Frame>) -> Result<Self> {
        Self::new(frames, self.info.clone())
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    /// Intensity at `(x, y, t)`.
    #[inline]
    pub fn at(&self, x: usize, y: usize, t: usize) -> f64 {
        self.frames[t].get(x, y)
    }
}
