//! Objective micro-movement spotting for high-frame-rate face video.
//!
//! Stages: [`ingest`] frames and annotations, [`geometry`] for alignment and
//! region masks, [`features`] for per-region histogram descriptors,
//! [`spotting`] for chi-square difference analysis with baseline thresholds,
//! [`eval`] for scoring, and [`synth`] for generating data with known truth.

pub mod error;
pub mod eval;
pub mod features;
pub mod frame;
pub mod geometry;
pub mod ingest;
pub mod spotting;
pub mod synth;

pub use error::{Error, Result};
pub use frame::{Frame, FrameSequence, SequenceInfo};
