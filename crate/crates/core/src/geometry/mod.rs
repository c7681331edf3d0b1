//! Alignment, triangulation, warping and region-mask fitting.

pub mod atlas;
pub mod delaunay;
pub(crate) mod fft;
pub mod landmarks;
pub mod mask;
pub mod registration;
pub mod warp;

pub use atlas::{AtlasRegion, RegionAtlas, REGION_COUNT};
pub use delaunay::{barycentric, delaunay, Point, TriangleMesh};
pub use landmarks::{AtlasLandmarks, FileLandmarks, LandmarkProvider};
pub use mask::{fit_region_mask, RegionMask};
pub use registration::{
    align_sequence, align_sequence_with, apply_shifts, estimate_shifts, fourier_shift, register_translation,
    translate, AlignFill, Registrar, Translation, DEFAULT_UPSAMPLING,
};
pub use warp::{pwa_warp, PiecewiseAffine};
