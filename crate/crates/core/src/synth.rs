//! Synthetic sequences with known ground truth.
//!
//! A clip is a periodic band-limited texture standing in for a face, plus
//! localized events (a Gaussian-in-time intensity bump inside the region
//! polygons its AU maps to), a circular subpixel camera drift and additive
//! Gaussian noise. Baselines share the texture and noise level but carry no
//! events and no drift.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence, SequenceInfo};
use crate::geometry::atlas::RegionAtlas;
use crate::geometry::delaunay::Point;
use crate::geometry::fft::{fft2, signed_freq, to_complex};
use crate::geometry::mask::point_in_polygon;
use crate::geometry::registration::fourier_shift;
use crate::ingest::{
    self, AuCode, GroundTruthMovement, LandmarkSet, BASELINE_PREFIX, GROUND_TRUTH_FILE,
    LANDMARKS_FILE,
};

/// Largest event amplitude still considered subtle.
pub const MAX_AMPLITUDE: f64 = 0.2;

const TEXTURE_MEAN: f64 = 0.5;
const TEXTURE_STD: f64 = 0.1;
/// Standard deviation of the Gaussian low-pass, in cycles per pixel.
const TEXTURE_BANDWIDTH: f64 = 0.08;
/// Event weight is zero within this distance of the polygon edge.
const EVENT_MARGIN: f64 = 1.0;
/// Distance over which the event weight ramps from 0 to 1.
const EVENT_TAPER: f64 = 2.0;

/// One injected movement. Frame indices are absolute within the clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthEvent {
    pub region_id: u8,
    pub onset: usize,
    pub apex: usize,
    pub offset: usize,
    /// Peak intensity change.
    pub amplitude: f64,
    /// AU codes written to the ground truth. Defaults to the most specific
    /// AU of `region_id`. The event is painted into every region these AUs
    /// map to, so ground truth and injected signal always agree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aus: Option<Vec<AuCode>>,
}

fn default_dims() -> [usize; 2] {
    [128, 128]
}
fn default_fps() -> f64 {
    200.0
}
fn default_frames() -> usize {
    600
}
fn default_pad() -> usize {
    200
}
fn default_noise() -> f64 {
    0.01
}
fn default_subject() -> String {
    "s01".into()
}
fn default_clip() -> String {
    "s01_c01".into()
}

/// Everything needed to render one clip and its baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// `[width, height]`.
    #[serde(default = "default_dims")]
    pub dims: [usize; 2],
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default = "default_frames")]
    pub n_frames: usize,
    /// Neutral frames recorded in the manifest as padding on each side.
    #[serde(default = "default_pad")]
    pub neutral_pad: usize,
    #[serde(default)]
    pub texture_seed: u64,
    #[serde(default)]
    pub events: Vec<SynthEvent>,
    /// Camera translation per frame, `[dx, dy]` pixels; frame `t` is shifted by `t * drift`.
    #[serde(default)]
    pub drift: [f64; 2],
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default = "default_subject")]
    pub subject_id: String,
    #[serde(default = "default_clip")]
    pub clip_id: String,
    /// Baseline length; defaults to `n_frames`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_frames: Option<usize>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            dims: default_dims(),
            fps: default_fps(),
            n_frames: default_frames(),
            neutral_pad: default_pad(),
            texture_seed: 0,
            events: Vec::new(),
            drift: [0.0, 0.0],
            noise_sigma: default_noise(),
            subject_id: default_subject(),
            clip_id: default_clip(),
            baseline_frames: None,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self, atlas: &RegionAtlas) -> Result<()> {
        let [w, h] = self.dims;
        if w < 8 || h < 8 {
            return Err(Error::Config(format!("dims {w}x{h} too small (min 8x8)")));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::Config(format!("fps must be > 0, got {}", self.fps)));
        }
        if self.n_frames == 0 {
            return Err(Error::Config("n_frames must be > 0".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.drift.iter().any(|d| !d.is_finite()) {
            return Err(Error::Config("drift must be finite".into()));
        }
        for (i, e) in self.events.iter().enumerate() {
            let at = format!("{} event {i}", self.clip_id);
            if atlas.region(e.region_id).is_none() {
                return Err(Error::Config(format!(
                    "{at}: region {} is not in the atlas",
                    e.region_id
                )));
            }
            if !(e.onset < e.apex && e.apex < e.offset) {
                return Err(Error::Config(format!(
                    "{at}: need onset < apex < offset, got {} {} {}",
                    e.onset, e.apex, e.offset
                )));
            }
            if e.offset >= self.n_frames {
                return Err(Error::Config(format!(
                    "{at}: offset {} beyond the last frame {}",
                    e.offset,
                    self.n_frames - 1
                )));
            }
            if !(e.amplitude > 0.0 && e.amplitude <= MAX_AMPLITUDE) {
                return Err(Error::Config(format!(
                    "{at}: amplitude must be in (0, {MAX_AMPLITUDE}], got {}",
                    e.amplitude
                )));
            }
            let aus = event_aus(atlas, e);
            if aus.is_empty() {
                return Err(Error::Config(format!("{at}: no AU codes")));
            }
            for code in &aus {
                if atlas.regions_for_au(code).is_empty() {
                    return Err(Error::Config(format!("{at}: AU {code} maps to no region")));
                }
            }
        }
        Ok(())
    }

    pub fn info(&self) -> SequenceInfo {
        SequenceInfo {
            fps: self.fps,
            subject_id: self.subject_id.clone(),
            clip_id: self.clip_id.clone(),
            neutral_pad: self.neutral_pad,
        }
    }

    pub fn baseline_info(&self, segment: usize) -> SequenceInfo {
        SequenceInfo {
            fps: self.fps,
            subject_id: self.subject_id.clone(),
            clip_id: baseline_name(segment),
            neutral_pad: 0,
        }
    }
}

/// Folder and clip name of baseline segment `segment`.
pub fn baseline_name(segment: usize) -> String {
    format!("{BASELINE_PREFIX}_{segment:02}")
}

/// The AU whose region set is smallest; ties keep the atlas order.
pub fn signature_au(atlas: &RegionAtlas, region_id: u8) -> Option<AuCode> {
    let region = atlas.region(region_id)?;
    region
        .au_codes
        .iter()
        .min_by_key(|c| atlas.regions_for_au(c).len())
        .cloned()
}

/// AU codes recorded for `event`.
pub fn event_aus(atlas: &RegionAtlas, event: &SynthEvent) -> Vec<AuCode> {
    match &event.aus {
        Some(codes) => codes.clone(),
        None => signature_au(atlas, event.region_id).into_iter().collect(),
    }
}

/// Regions an event is painted into: everything its AUs map to.
pub fn event_regions(atlas: &RegionAtlas, event: &SynthEvent) -> BTreeSet<u8> {
    event_aus(atlas, event)
        .iter()
        .flat_map(|c| atlas.regions_for_au(c))
        .collect()
}

/// Ground truth exactly matching the injected events.
pub fn ground_truth(spec: &SynthSpec, atlas: &RegionAtlas) -> Vec<GroundTruthMovement> {
    spec.events
        .iter()
        .map(|e| GroundTruthMovement {
            clip_id: spec.clip_id.clone(),
            onset: e.onset,
            apex: e.apex,
            offset: e.offset,
            au_codes: event_aus(atlas, e),
        })
        .collect()
}

/// Periodic band-limited noise with mean 0.5 and standard deviation 0.1.
pub fn texture(width: usize, height: usize, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..width * height)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mut spec = to_complex(&white);
    fft2(&mut spec, width, height, false);
    let two_s2 = 2.0 * TEXTURE_BANDWIDTH * TEXTURE_BANDWIDTH;
    for v in 0..height {
        let fy = signed_freq(v, height) / height as f64;
        for u in 0..width {
            let fx = signed_freq(u, width) / width as f64;
            spec[v * width + u] *= (-(fx * fx + fy * fy) / two_s2).exp();
        }
    }
    spec[0] = Complex64::new(0.0, 0.0);
    fft2(&mut spec, width, height, true);
    let values: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let n = values.len() as f64;
    let std = (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let scale = if std > 0.0 { TEXTURE_STD / std } else { 0.0 };
    Frame::new(
        width,
        height,
        values
            .iter()
            .map(|v| (TEXTURE_MEAN + v * scale).clamp(0.0, 1.0))
            .collect(),
    )
    .expect("dims match")
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

/// Spatial event weight in `[0, 1]`: zero outside the polygons and within
/// one pixel of their edges, ramping to one further inside.
pub fn event_window(
    atlas: &RegionAtlas,
    regions: &BTreeSet<u8>,
    width: usize,
    height: usize,
) -> Frame {
    let sx = width as f64 / atlas.canonical_size[0] as f64;
    let sy = height as f64 / atlas.canonical_size[1] as f64;
    let polygons: Vec<Vec<Point>> = regions
        .iter()
        .filter_map(|&id| atlas.region(id))
        .map(|r| r.polygon.iter().map(|p| [p[0] * sx, p[1] * sy]).collect())
        .collect();
    Frame::from_fn(width, height, |x, y| {
        let p = [x as f64, y as f64];
        polygons
            .iter()
            .filter(|poly| point_in_polygon(p, poly))
            .map(|poly| {
                let n = poly.len();
                let d = (0..n)
                    .map(|i| segment_distance(p, poly[i], poly[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min);
                ((d - EVENT_MARGIN) / EVENT_TAPER).clamp(0.0, 1.0)
            })
            .fold(0.0, f64::max)
    })
}

/// Gaussian temporal profile with `sigma = (offset - onset) / 6`, peaking at the apex.
pub fn temporal_profile(event: &SynthEvent, t: usize) -> f64 {
    let sigma = (event.offset - event.onset) as f64 / 6.0;
    let d = t as f64 - event.apex as f64;
    (-d * d / (2.0 * sigma * sigma)).exp()
}

/// Texture and event layers of one clip, before drift and noise.
pub struct Scene {
    texture: Frame,
    events: Vec<(SynthEvent, Frame)>,
}

impl Scene {
    pub fn new(spec: &SynthSpec, atlas: &RegionAtlas) -> Result<Self> {
        spec.validate(atlas)?;
        let [w, h] = spec.dims;
        let events = spec
            .events
            .iter()
            .map(|e| {
                (
                    e.clone(),
                    event_window(atlas, &event_regions(atlas, e), w, h),
                )
            })
            .collect();
        Ok(Self {
            texture: texture(w, h, spec.texture_seed),
            events,
        })
    }

    pub fn texture(&self) -> &Frame {
        &self.texture
    }

    /// Noise-free, drift-free frame `t`.
    pub fn clean_frame(&self, t: usize) -> Frame {
        let mut frame = self.texture.clone();
        for (event, window) in &self.events {
            let g = event.amplitude * temporal_profile(event, t);
            if g < 1e-12 {
                continue;
            }
            for (v, w) in frame.data_mut().iter_mut().zip(window.data()) {
                *v += g * w;
            }
        }
        frame
    }
}

fn add_noise(frame: &mut Frame, noise: Option<&Normal<f64>>, rng: &mut ChaCha8Rng) {
    for v in frame.data_mut() {
        if let Some(n) = noise {
            *v += n.sample(rng);
        }
        *v = v.clamp(0.0, 1.0);
    }
}

fn noise_dist(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma validated"))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Renders the movement clip: events, then drift, then noise.
pub fn movement_sequence(spec: &SynthSpec, scene: &Scene, seed: u64) -> Result<FrameSequence> {
    let mut rng = stream_rng(seed, 0);
    let noise = noise_dist(spec.noise_sigma);
    let frames = (0..spec.n_frames)
        .map(|t| {
            let mut frame = scene.clean_frame(t);
            let (dx, dy) = (spec.drift[0] * t as f64, spec.drift[1] * t as f64);
            if dx != 0.0 || dy != 0.0 {
                frame = fourier_shift(&frame, dx, dy);
            }
            add_noise(&mut frame, noise.as_ref(), &mut rng);
            frame
        })
        .collect();
    FrameSequence::new(frames, spec.info())
}

/// Renders baseline segment `segment` of `n_frames` neutral frames.
pub fn baseline_sequence(
    spec: &SynthSpec,
    scene: &Scene,
    seed: u64,
    segment: usize,
    n_frames: usize,
) -> Result<FrameSequence> {
    let mut rng = stream_rng(seed, 1 + segment as u64);
    let noise = noise_dist(spec.noise_sigma);
    let frames = (0..n_frames)
        .map(|_| {
            let mut frame = scene.texture.clone();
            add_noise(&mut frame, noise.as_ref(), &mut rng);
            frame
        })
        .collect();
    FrameSequence::new(frames, spec.baseline_info(segment))
}

/// Canonical atlas points scaled to the clip, annotating frame 0.
pub fn landmarks(spec: &SynthSpec, atlas: &RegionAtlas) -> Result<LandmarkSet> {
    LandmarkSet::new(atlas.scaled_points(spec.dims[0], spec.dims[1]), 0)
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub movement: FrameSequence,
    pub baseline: FrameSequence,
    pub landmarks: LandmarkSet,
    pub ground_truth: Vec<GroundTruthMovement>,
}

/// Renders `spec` against the built-in atlas.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SynthOutput> {
    generate_with(spec, &RegionAtlas::builtin(), seed)
}

pub fn generate_with(spec: &SynthSpec, atlas: &RegionAtlas, seed: u64) -> Result<SynthOutput> {
    let scene = Scene::new(spec, atlas)?;
    Ok(SynthOutput {
        movement: movement_sequence(spec, &scene, seed)?,
        baseline: baseline_sequence(
            spec,
            &scene,
            seed,
            0,
            spec.baseline_frames.unwrap_or(spec.n_frames),
        )?,
        landmarks: landmarks(spec, atlas)?,
        ground_truth: ground_truth(spec, atlas),
    })
}

/// One clip of a dataset; unset fields inherit dataset defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthClip {
    pub clip_id: String,
    pub n_frames: usize,
    #[serde(default)]
    pub neutral_pad: usize,
    #[serde(default)]
    pub events: Vec<SynthEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
}

fn default_segments() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSubject {
    pub subject_id: String,
    pub texture_seed: u64,
    /// Frames per baseline segment.
    pub baseline_frames: usize,
    /// Baselines are written as this many independent segments.
    #[serde(default = "default_segments")]
    pub baseline_segments: usize,
    pub clips: Vec<SynthClip>,
}

/// A multi-subject synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthDataset {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dims")]
    pub dims: [usize; 2],
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub drift: [f64; 2],
    pub subjects: Vec<SynthSubject>,
}

/// Knobs for [`SynthDataset::corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusParams {
    pub subjects: usize,
    pub clips_per_subject: usize,
    pub n_frames: usize,
    /// `offset - onset` of every event.
    pub event_frames: usize,
    /// Apexes are drawn uniformly within this many frames of the clip centre.
    pub apex_jitter: usize,
    pub amplitude: f64,
    pub noise_sigma: f64,
    pub drift: [f64; 2],
    pub baseline_frames: usize,
    pub baseline_segments: usize,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            subjects: 5,
            clips_per_subject: 6,
            n_frames: 200,
            event_frames: 60,
            apex_jitter: 10,
            amplitude: 0.1,
            noise_sigma: 0.01,
            drift: [0.0, 0.0],
            baseline_frames: 1500,
            baseline_segments: 4,
        }
    }
}

/// Seed for one named item of a dataset, mixed with splitmix64.
fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut state = seed;
    let mut mix = |v: u64| {
        state = state.wrapping_add(v).wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state = z ^ (z >> 31);
    };
    for b in name.bytes() {
        mix(b as u64);
    }
    mix(name.len() as u64);
    state
}

impl SynthDataset {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("synth spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("dataset serializes")
    }

    /// Random one-event-per-clip corpus; each clip draws its region uniformly.
    pub fn corpus(params: &CorpusParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = params.event_frames / 2;
        let subjects = (0..params.subjects)
            .map(|s| {
                let subject_id = format!("s{:02}", s + 1);
                let clips = (0..params.clips_per_subject)
                    .map(|c| {
                        let centre = params.n_frames / 2;
                        let j = params.apex_jitter as i64;
                        let apex = (centre as i64 + rng.random_range(-j..=j)) as usize;
                        SynthClip {
                            clip_id: format!("{subject_id}_c{:02}", c + 1),
                            n_frames: params.n_frames,
                            neutral_pad: 0,
                            events: vec![SynthEvent {
                                region_id: rng.random_range(1..=26),
                                onset: apex - half,
                                apex,
                                offset: apex - half + params.event_frames,
                                amplitude: params.amplitude,
                                aus: None,
                            }],
                            drift: None,
                            noise_sigma: None,
                        }
                    })
                    .collect();
                SynthSubject {
                    subject_id,
                    texture_seed: rng.random(),
                    baseline_frames: params.baseline_frames,
                    baseline_segments: params.baseline_segments,
                    clips,
                }
            })
            .collect();
        Self {
            seed,
            dims: default_dims(),
            fps: default_fps(),
            noise_sigma: params.noise_sigma,
            drift: params.drift,
            subjects,
        }
    }

    /// Full spec of one clip.
    pub fn clip_spec(&self, subject: &SynthSubject, clip: &SynthClip) -> SynthSpec {
        SynthSpec {
            dims: self.dims,
            fps: self.fps,
            n_frames: clip.n_frames,
            neutral_pad: clip.neutral_pad,
            texture_seed: subject.texture_seed,
            events: clip.events.clone(),
            drift: clip.drift.unwrap_or(self.drift),
            noise_sigma: clip.noise_sigma.unwrap_or(self.noise_sigma),
            subject_id: subject.subject_id.clone(),
            clip_id: clip.clip_id.clone(),
            baseline_frames: Some(subject.baseline_frames),
        }
    }

    pub fn validate(&self, atlas: &RegionAtlas) -> Result<()> {
        let mut ids = BTreeSet::new();
        for subject in &self.subjects {
            if !ids.insert(subject.subject_id.clone()) {
                return Err(Error::Config(format!(
                    "duplicate id {}",
                    subject.subject_id
                )));
            }
            if subject.baseline_segments == 0 {
                return Err(Error::Config(format!(
                    "{}: baseline_segments must be >= 1",
                    subject.subject_id
                )));
            }
            for clip in &subject.clips {
                if !ids.insert(clip.clip_id.clone()) {
                    return Err(Error::Config(format!("duplicate id {}", clip.clip_id)));
                }
                if clip.clip_id.starts_with(BASELINE_PREFIX) {
                    return Err(Error::Config(format!(
                        "clip id {} clashes with the baseline folder prefix",
                        clip.clip_id
                    )));
                }
                self.clip_spec(subject, clip).validate(atlas)?;
            }
        }
        Ok(())
    }

    /// All ground truth, in subject then clip order.
    pub fn ground_truth(&self, atlas: &RegionAtlas) -> Vec<GroundTruthMovement> {
        self.subjects
            .iter()
            .flat_map(|s| s.clips.iter().map(move |c| (s, c)))
            .flat_map(|(s, c)| ground_truth(&self.clip_spec(s, c), atlas))
            .collect()
    }

    /// Writes the dataset in ingest format:
    ///
    /// ```text
    /// root/ground_truth.csv
    /// root/<subject>/<clip>/{000000.png, ..., manifest.toml, landmarks.json}
    /// root/<subject>/baseline_NN/{000000.png, ..., manifest.toml}
    /// ```
    pub fn write(&self, root: &Path, atlas: &RegionAtlas) -> Result<()> {
        self.validate(atlas)?;
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        for subject in &self.subjects {
            let subject_dir = root.join(&subject.subject_id);
            let base_seed = derive_seed(self.seed, &subject.subject_id);
            for clip in &subject.clips {
                let spec = self.clip_spec(subject, clip);
                let scene = Scene::new(&spec, atlas)?;
                let seq = movement_sequence(&spec, &scene, derive_seed(self.seed, &clip.clip_id))?;
                let dir = subject_dir.join(&clip.clip_id);
                ingest::write_sequence(&dir, &seq)?;
                ingest::write_landmarks(&dir.join(LANDMARKS_FILE), &landmarks(&spec, atlas)?)?;
                info!("wrote {}", dir.display());
            }
            let spec = SynthSpec {
                events: Vec::new(),
                ..self.clip_spec(
                    subject,
                    &SynthClip {
                        clip_id: "baseline".into(),
                        n_frames: subject.baseline_frames,
                        neutral_pad: 0,
                        events: Vec::new(),
                        drift: Some([0.0, 0.0]),
                        noise_sigma: None,
                    },
                )
            };
            let scene = Scene::new(&spec, atlas)?;
            for segment in 0..subject.baseline_segments {
                let seq =
                    baseline_sequence(&spec, &scene, base_seed, segment, subject.baseline_frames)?;
                let dir = subject_dir.join(baseline_name(segment));
                ingest::write_sequence(&dir, &seq)?;
                info!("wrote {}", dir.display());
            }
        }
        ingest::write_ground_truth(&root.join(GROUND_TRUTH_FILE), &self.ground_truth(atlas))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract, FeatureConfig};
    use crate::geometry::mask::fit_region_mask;
    use crate::geometry::registration::estimate_shifts;
    use crate::spotting::{contrast, difference_signal, MicroInterval};

    fn event(region_id: u8, onset: usize, apex: usize, offset: usize) -> SynthEvent {
        SynthEvent {
            region_id,
            onset,
            apex,
            offset,
            amplitude: 0.1,
            aus: None,
        }
    }

    fn spec(n: usize) -> SynthSpec {
        SynthSpec {
            dims: [64, 64],
            n_frames: n,
            neutral_pad: 0,
            texture_seed: 3,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn static_spec_gives_identical_frames() {
        let s = SynthSpec {
            noise_sigma: 0.0,
            ..spec(5)
        };
        let out = generate(&s, 1).unwrap();
        for f in out.movement.frames() {
            assert_eq!(f, out.movement.frame(0));
        }
        assert_eq!(out.movement.frames(), out.baseline.frames());
    }

    #[test]
    fn ground_truth_matches_event() {
        let s = SynthSpec {
            events: vec![event(5, 100, 130, 160)],
            ..spec(200)
        };
        let atlas = RegionAtlas::builtin();
        let gt = ground_truth(&s, &atlas);
        assert_eq!(gt.len(), 1);
        assert_eq!((gt[0].onset, gt[0].apex, gt[0].offset), (100, 130, 160));
        assert!(atlas.positive_regions(&gt[0]).contains(&5));
        // 60 frames at 200 fps is 300 ms, under the 500 ms micro limit.
        assert!((gt[0].offset - gt[0].onset) as f64 / s.fps < 0.5);
    }

    #[test]
    fn painted_regions_equal_positive_regions() {
        let atlas = RegionAtlas::builtin();
        for id in 1..=26u8 {
            let e = event(id, 10, 20, 30);
            let gt = GroundTruthMovement {
                clip_id: "c".into(),
                onset: 10,
                apex: 20,
                offset: 30,
                au_codes: event_aus(&atlas, &e),
            };
            let painted = event_regions(&atlas, &e);
            assert!(painted.contains(&id));
            assert_eq!(painted, atlas.positive_regions(&gt));
        }
        // Mouth corners and the lower lip have an AU of their own.
        for id in [21, 22, 23, 25] {
            assert_eq!(event_regions(&atlas, &event(id, 10, 20, 30)).len(), 1);
        }
    }

    #[test]
    fn unknown_region_rejected() {
        let s = SynthSpec {
            events: vec![event(27, 10, 20, 30)],
            ..spec(50)
        };
        let err = generate(&s, 0).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("region 27"));
    }

    #[test]
    fn invalid_events_rejected() {
        for e in [
            event(3, 20, 20, 30),
            event(3, 10, 20, 60),
            SynthEvent {
                amplitude: 0.3,
                ..event(3, 10, 20, 30)
            },
        ] {
            let s = SynthSpec {
                events: vec![e],
                ..spec(50)
            };
            assert!(generate(&s, 0).unwrap_err().is_config());
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let s = SynthSpec {
            events: vec![event(7, 10, 20, 30)],
            drift: [0.3, -0.1],
            ..spec(40)
        };
        let a = generate(&s, 9).unwrap();
        let b = generate(&s, 9).unwrap();
        assert_eq!(a.movement, b.movement);
        assert_eq!(a.baseline, b.baseline);
        let c = generate(&s, 10).unwrap();
        assert_ne!(a.movement, c.movement);
    }

    #[test]
    fn texture_statistics() {
        let t = texture(128, 128, 4);
        let n = t.data().len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((mean - 0.5).abs() < 0.01);
        assert!((var.sqrt() - 0.1).abs() < 0.01);
    }

    #[test]
    fn events_stay_inside_their_polygons() {
        let atlas = RegionAtlas::builtin();
        let s = SynthSpec {
            dims: [128, 128],
            noise_sigma: 0.0,
            events: vec![event(9, 5, 15, 25)],
            ..spec(30)
        };
        let out = generate(&s, 2).unwrap();
        let polys: Vec<Vec<Point>> = event_regions(&atlas, &s.events[0])
            .iter()
            .map(|&id| atlas.region(id).unwrap().polygon.clone())
            .collect();
        let near = |x: usize, y: usize| {
            (-1i32..=1).any(|dy| {
                (-1i32..=1).any(|dx| {
                    let p = [x as f64 + dx as f64, y as f64 + dy as f64];
                    polys.iter().any(|poly| point_in_polygon(p, poly))
                })
            })
        };
        let mut changed = 0;
        for t in 0..30 {
            let (m, b) = (out.movement.frame(t), out.baseline.frame(t));
            for y in 0..128 {
                for x in 0..128 {
                    if m.get(x, y) != b.get(x, y) {
                        assert!(near(x, y), "({x},{y}) changed at frame {t}");
                        changed += 1;
                    }
                }
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn clean_non_event_regions_have_flat_signal() {
        let atlas = RegionAtlas::builtin();
        let s = SynthSpec {
            dims: [128, 128],
            noise_sigma: 0.0,
            events: vec![event(23, 40, 60, 80)],
            ..spec(120)
        };
        let out = generate(&s, 2).unwrap();
        let mask = fit_region_mask(&atlas, &out.landmarks, (128, 128)).unwrap();
        let cube = extract(&out.movement, &mask, &FeatureConfig::default()).unwrap();
        let mi = MicroInterval::new(11).unwrap();
        let c = contrast(&difference_signal(&cube, mi).unwrap());
        for r in 1..=26 {
            let m = c.max(r);
            if r == 23 {
                assert!(m > 1e-3);
            } else {
                assert!(m <= 1e-9, "region {r}: {m}");
            }
        }
    }

    #[test]
    fn drift_is_recovered_by_alignment() {
        let s = SynthSpec {
            dims: [128, 128],
            noise_sigma: 0.0,
            drift: [0.25, 0.0],
            ..spec(12)
        };
        let out = generate(&s, 0).unwrap();
        let shifts = estimate_shifts(&out.movement, 100).unwrap();
        for (t, sh) in shifts.iter().enumerate() {
            assert!(
                (sh.dx - 0.25 * t as f64).abs() <= 0.01,
                "frame {t}: {}",
                sh.dx
            );
            assert!(sh.dy.abs() <= 0.01);
        }
    }

    #[test]
    fn landmarks_are_canonical() {
        let atlas = RegionAtlas::builtin();
        let out = generate(
            &SynthSpec {
                dims: [128, 128],
                ..spec(3)
            },
            0,
        )
        .unwrap();
        assert_eq!(out.landmarks.points(), atlas.canonical_points.as_slice());
        assert_eq!(out.landmarks.frame_index(), 0);
    }

    #[test]
    fn dataset_writes_ingest_layout() {
        let atlas = RegionAtlas::builtin();
        let params = CorpusParams {
            subjects: 1,
            clips_per_subject: 3,
            n_frames: 40,
            event_frames: 12,
            apex_jitter: 2,
            baseline_frames: 20,
            baseline_segments: 2,
            ..CorpusParams::default()
        };
        let ds = SynthDataset {
            dims: [32, 32],
            ..SynthDataset::corpus(&params, 5)
        };
        let dir = tempfile::tempdir().unwrap();
        ds.write(dir.path(), &atlas).unwrap();
        let gt = ingest::load_ground_truth(&dir.path().join(GROUND_TRUTH_FILE)).unwrap();
        assert_eq!(gt.len(), 3);
        assert_eq!(gt, ds.ground_truth(&atlas));
        for clip in &ds.subjects[0].clips {
            let cdir = dir.path().join("s01").join(&clip.clip_id);
            let seq = ingest::load_sequence_dir(&cdir).unwrap();
            assert_eq!(seq.len(), 40);
            assert_eq!(seq.info().clip_id, clip.clip_id);
            ingest::load_landmarks(&cdir.join(LANDMARKS_FILE)).unwrap();
        }
        for seg in 0..2 {
            let seq = ingest::load_sequence_dir(&dir.path().join("s01").join(baseline_name(seg)))
                .unwrap();
            assert_eq!(seq.len(), 20);
        }
        let again = SynthDataset::from_toml(&ds.to_toml()).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn dataset_rejects_region_27() {
        let mut ds = SynthDataset::corpus(
            &CorpusParams {
                subjects: 1,
                clips_per_subject: 1,
                ..CorpusParams::default()
            },
            1,
        );
        ds.subjects[0].clips[0].events[0].region_id = 27;
        let dir = tempfile::tempdir().unwrap();
        assert!(ds
            .write(dir.path(), &RegionAtlas::builtin())
            .unwrap_err()
            .is_config());
    }
}
