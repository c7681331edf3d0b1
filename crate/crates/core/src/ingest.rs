//! Loading frame folders, landmark files and FACS ground-truth sheets.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{DynamicImage, ImageBuffer, Luma};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, FrameSequence, SequenceInfo};

/// Number of facial points produced by the landmark scheme in use.
pub const LANDMARK_COUNT: usize = 83;

/// File name of the per-sequence manifest inside a frame folder.
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Landmark file stored next to the frames of a clip.
pub const LANDMARKS_FILE: &str = "landmarks.json";

/// Ground-truth sheet at the root of a dataset folder.
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";

/// Subject sub-folders starting with this prefix hold neutral baseline footage.
pub const BASELINE_PREFIX: &str = "baseline";

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp", "tif", "tiff", "pgm"];

/// Reads `manifest.toml` (`fps`, `subject_id`, `clip_id`, `neutral_pad`).
pub fn read_manifest(path: &Path) -> Result<SequenceInfo> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn write_manifest(path: &Path, info: &SequenceInfo) -> Result<()> {
    let text = toml::to_string(info).map_err(|e| Error::Schema(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Trailing number in a frame file's stem, e.g. `12` for `img12.jpg`.
pub fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

/// Image files in `dir` ordered by frame number.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if path.is_file() && is_image {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(Error::Load(format!("no frames found in {}", dir.display())));
    }
    let ext = |p: &PathBuf| {
        p.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
    };
    let first_ext = ext(&files[0]);
    if let Some(odd) = files.iter().find(|p| ext(p) != first_ext) {
        return Err(Error::Load(format!(
            "mixed raster formats in {}: {}",
            dir.display(),
            odd.display()
        )));
    }
    let mut keyed = Vec::with_capacity(files.len());
    for path in files {
        let n = frame_number(&path).ok_or_else(|| {
            Error::Load(format!("no frame number in file name {}", path.display()))
        })?;
        let name = path
            .file_name()
            .map(|s| s.to_os_string())
            .unwrap_or_default();
        keyed.push((n, name, path));
    }
    keyed.sort();
    Ok(keyed.into_iter().map(|(_, _, p)| p).collect())
}

/// Converts a decoded image to intensities in `[0, 1]`; colour uses Rec. 601 luma.
pub fn image_to_frame(img: &DynamicImage) -> Frame {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Frame::new(
            w,
            h,
            buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        )
        .expect("dimensions match buffer"),
        DynamicImage::ImageLuma16(buf) => Frame::new(
            w,
            h,
            buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
        )
        .expect("dimensions match buffer"),
        other => {
            let rgb = other.to_rgb8();
            let data = rgb
                .pixels()
                .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
                .collect();
            Frame::new(w, h, data).expect("dimensions match buffer")
        }
    }
}

fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    Ok(image_to_frame(&img))
}

/// Loads a directory of numbered still images as a sequence.
///
/// Files are ordered by the trailing number in their stem, so `img2.png`
/// precedes `img10.png` regardless of directory listing order.
pub fn load_sequence(dir: &Path, info: &SequenceInfo) -> Result<FrameSequence> {
    load_frames(&list_frames(dir)?, info)
}

/// Loads an explicit, already ordered list of frame files.
pub fn load_frames(files: &[PathBuf], info: &SequenceInfo) -> Result<FrameSequence> {
    if files.is_empty() {
        return Err(Error::Load("no frames found".into()));
    }
    let mut frames: Vec<Frame> = Vec::with_capacity(files.len());
    for path in files {
        let frame = load_frame(path)?;
        if let Some(first) = frames.first() {
            if frame.dims() != first.dims() {
                return Err(Error::Load(format!(
                    "{} is {}x{}, expected {}x{}",
                    path.display(),
                    frame.width(),
                    frame.height(),
                    first.width(),
                    first.height()
                )));
            }
        }
        frames.push(frame);
    }
    FrameSequence::new(frames, info.clone())
}

/// Loads `dir` using the `manifest.toml` stored inside it.
pub fn load_sequence_dir(dir: &Path) -> Result<FrameSequence> {
    let info = read_manifest(&dir.join(MANIFEST_FILE))?;
    load_sequence(dir, &info)
}

/// Writes frames as 8-bit PNGs (`000000.png`, ...) plus the manifest.
pub fn write_sequence(dir: &Path, seq: &FrameSequence) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in seq.frames().iter().enumerate() {
        write_png(&dir.join(format!("{i:06}.png")), frame)?;
    }
    write_manifest(&dir.join(MANIFEST_FILE), seq.info())
}

/// Writes one frame as an 8-bit grayscale PNG, clamping to `[0, 1]`.
pub fn write_png(path: &Path, frame: &Frame) -> Result<()> {
    let pixels: Vec<u8> = frame
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(frame.width() as u32, frame.height() as u32, pixels)
            .expect("dimensions match buffer");
    buf.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Facial control points detected on one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<[f64; 2]>,
    frame_index: usize,
}

#[derive(Serialize, Deserialize)]
struct LandmarkFile {
    #[serde(default)]
    frame_index: usize,
    points: Vec<[f64; 2]>,
}

impl LandmarkSet {
    pub fn new(points: Vec<[f64; 2]>, frame_index: usize) -> Result<Self> {
        if points.len() != LANDMARK_COUNT {
            return Err(Error::Schema(format!(
                "expected {LANDMARK_COUNT} points, found {}",
                points.len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Schema("landmark coordinates must be finite".into()));
        }
        Ok(Self {
            points,
            frame_index,
        })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    /// Checks every point lies inside a `width` x `height` frame.
    pub fn validate_bounds(&self, width: usize, height: usize) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if p[0] < 0.0 || p[1] < 0.0 || p[0] > (width - 1) as f64 || p[1] > (height - 1) as f64 {
                return Err(Error::Validation(format!(
                    "landmark {i} at ({}, {}) lies outside the {width}x{height} frame",
                    p[0], p[1]
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&LandmarkFile {
            frame_index: self.frame_index,
            points: self.points.clone(),
        })
        .expect("landmarks serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LandmarkFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("landmarks: {e}")))?;
        Self::new(file.points, file.frame_index)
    }
}

pub fn load_landmarks(path: &Path) -> Result<LandmarkSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LandmarkSet::from_json(&text).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_landmarks(path: &Path, landmarks: &LandmarkSet) -> Result<()> {
    fs::write(path, landmarks.to_json()).map_err(|e| Error::io(path, e))
}

/// Side of the face an action unit is coded on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// A FACS action unit token such as `AU4`, `L12`, `AU12B` or `R14A`.
///
/// Tokens that do not follow the FACS grammar are kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AuCode {
    Unit {
        number: u32,
        side: Option<Side>,
        intensity: Option<char>,
    },
    Raw(String),
}

impl AuCode {
    pub fn unit(number: u32) -> Self {
        AuCode::Unit {
            number,
            side: None,
            intensity: None,
        }
    }

    pub fn number(&self) -> Option<u32> {
        match self {
            AuCode::Unit { number, .. } => Some(*number),
            AuCode::Raw(_) => None,
        }
    }

    pub fn side(&self) -> Option<Side> {
        match self {
            AuCode::Unit { side, .. } => *side,
            AuCode::Raw(_) => None,
        }
    }

    /// Whether an annotated code activates a region listing `self`.
    ///
    /// Unlateralised codes on either side match; lateralised codes only match
    /// regions on the same side or regions without a side.
    pub fn covers(&self, annotated: &AuCode) -> bool {
        match (self.number(), annotated.number()) {
            (Some(a), Some(b)) if a == b => match (self.side(), annotated.side()) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            },
            _ => false,
        }
    }

    fn parse_unit(token: &str) -> Option<AuCode> {
        let t = token.trim();
        let t = t
            .strip_prefix("AU")
            .or_else(|| t.strip_prefix("au"))
            .unwrap_or(t);
        let (side, rest) = match t.chars().next()? {
            'L' | 'l' => (Some(Side::Left), &t[1..]),
            'R' | 'r' => (Some(Side::Right), &t[1..]),
            _ => (None, t),
        };
        let digits_end = rest
            .char_indices()
            .find(|(_, c)| !c.is_ascii_digit())
            .map_or(rest.len(), |(i, _)| i);
        if digits_end == 0 {
            return None;
        }
        let number = rest[..digits_end].parse().ok()?;
        let suffix = &rest[digits_end..];
        let intensity = match suffix.len() {
            0 => None,
            1 => {
                let c = suffix.chars().next()?.to_ascii_uppercase();
                if ('A'..='E').contains(&c) {
                    Some(c)
                } else {
                    return None;
                }
            }
            _ => return None,
        };
        Some(AuCode::Unit {
            number,
            side,
            intensity,
        })
    }
}

impl FromStr for AuCode {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(Self::parse_unit(s).unwrap_or_else(|| AuCode::Raw(s.trim().to_string())))
    }
}

impl fmt::Display for AuCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuCode::Unit {
                number,
                side,
                intensity,
            } => {
                match side {
                    Some(Side::Left) => write!(f, "L{number}")?,
                    Some(Side::Right) => write!(f, "R{number}")?,
                    None => write!(f, "AU{number}")?,
                }
                if let Some(c) = intensity {
                    write!(f, "{c}")?;
                }
                Ok(())
            }
            AuCode::Raw(s) => f.write_str(s),
        }
    }
}

impl Serialize for AuCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AuCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().expect("infallible"))
    }
}

/// Parses a `+`-joined AU list such as `AU4+AU7`.
pub fn parse_au_list(field: &str) -> Vec<AuCode> {
    field
        .split('+')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().expect("infallible"))
        .collect()
}

pub fn format_au_list(codes: &[AuCode]) -> String {
    codes
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("+")
}

/// One FACS-coded movement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMovement {
    pub clip_id: String,
    pub onset: usize,
    pub apex: usize,
    pub offset: usize,
    pub au_codes: Vec<AuCode>,
}

impl GroundTruthMovement {
    pub fn validate(&self) -> Result<()> {
        if self.onset > self.offset {
            return Err(Error::Validation("onset after offset".into()));
        }
        if self.apex < self.onset || self.apex > self.offset {
            return Err(Error::Validation("apex outside [onset, offset]".into()));
        }
        if self.au_codes.is_empty() {
            return Err(Error::Validation("empty AU list".into()));
        }
        Ok(())
    }

    /// Checks the movement fits a clip of `frame_count` frames.
    pub fn validate_frames(&self, frame_count: usize) -> Result<()> {
        if self.offset >= frame_count {
            return Err(Error::Validation(format!(
                "movement in {} ends at frame {} but the clip has {frame_count} frames",
                self.clip_id, self.offset
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthRow {
    clip_id: String,
    onset: usize,
    apex: usize,
    offset: usize,
    aus: String,
}

/// Parses the ground-truth CSV (`clip_id,onset,apex,offset,aus`).
pub fn parse_ground_truth<R: std::io::Read>(reader: R) -> Result<Vec<GroundTruthMovement>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<GroundTruthRow>().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Schema(format!("row {row_no}: {e}")))?;
        let au_codes = parse_au_list(&row.aus);
        for code in &au_codes {
            if let AuCode::Raw(raw) = code {
                warn!("row {row_no}: unrecognised AU token {raw:?} kept verbatim");
            }
        }
        let movement = GroundTruthMovement {
            clip_id: row.clip_id,
            onset: row.onset,
            apex: row.apex,
            offset: row.offset,
            au_codes,
        };
        movement.validate().map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("row {row_no}: {m}")),
            other => other,
        })?;
        out.push(movement);
    }
    Ok(out)
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthMovement>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(file)
}

pub fn ground_truth_to_csv(movements: &[GroundTruthMovement]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    // Header is written even for an empty list.
    wtr.write_record(["clip_id", "onset", "apex", "offset", "aus"])
        .expect("in-memory write");
    for m in movements {
        wtr.write_record([
            m.clip_id.clone(),
            m.onset.to_string(),
            m.apex.to_string(),
            m.offset.to_string(),
            format_au_list(&m.au_codes),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf8")
}

pub fn write_ground_truth(path: &Path, movements: &[GroundTruthMovement]) -> Result<()> {
    fs::write(path, ground_truth_to_csv(movements)).map_err(|e| Error::io(path, e))
}
