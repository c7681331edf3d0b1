use std::io::{Read, Write};
use std::path::Path;

use super::{Descriptor, PlaneSelection};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MMFC";
const FORMAT_VERSION: u32 = 1;
const NO_PLANES: u8 = 0xFF;

/// Histograms indexed by (region, frame, bin), row-major, regions 1-based in the API.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCube {
    descriptor: Descriptor,
    planes: Option<PlaneSelection>,
    bins: usize,
    regions: usize,
    frames: usize,
    hist_len: usize,
    data: Vec<f64>,
}

impl FeatureCube {
    /// `planes` is `None` for descriptors without a plane notion (HOOF).
    pub fn new(
        descriptor: Descriptor,
        planes: Option<PlaneSelection>,
        bins: usize,
        regions: usize,
        frames: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let plane_count = planes.map_or(1, |p| p.planes().len());
        let hist_len = bins * plane_count;
        if data.len() != regions * frames * hist_len {
            return Err(Error::Mismatch(format!(
                "feature payload has {} values, expected {regions}x{frames}x{hist_len}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Feature(format!(
                "histogram entry {v} is not finite and >= 0"
            )));
        }
        Ok(Self {
            descriptor,
            planes,
            bins,
            regions,
            frames,
            hist_len,
            data,
        })
    }

    pub fn descriptor(&self) -> Descriptor {
        self.descriptor
    }

    pub fn planes(&self) -> Option<PlaneSelection> {
        self.planes
    }

    /// Bins per plane.
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn hist_len(&self) -> usize {
        self.hist_len
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Histogram of `region` (1-based) at `frame`.
    pub fn hist(&self, region: usize, frame: usize) -> &[f64] {
        let start = ((region - 1) * self.frames + frame) * self.hist_len;
        &self.data[start..start + self.hist_len]
    }

    /// Frames `range` of every region, as a new cube.
    pub fn slice_frames(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.frames || range.start > range.end {
            return Err(Error::Validation(format!(
                "frame range {range:?} outside 0..{}",
                self.frames
            )));
        }
        let mut data = Vec::with_capacity(self.regions * range.len() * self.hist_len);
        for r in 1..=self.regions {
            for f in range.clone() {
                data.extend_from_slice(self.hist(r, f));
            }
        }
        Self::new(
            self.descriptor,
            self.planes,
            self.bins,
            self.regions,
            range.len(),
            data,
        )
    }

    pub fn write_binary(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&[
            self.descriptor.code(),
            self.planes.map_or(NO_PLANES, PlaneSelection::code),
        ])?;
        for v in [self.bins, self.regions, self.frames] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let bad = |m: &str| Error::Schema(format!("feature container: {m}"));
        let mut head = [0u8; 4 + 4 + 2 + 24];
        r.read_exact(&mut head)
            .map_err(|_| bad("truncated header"))?;
        if &head[0..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let descriptor = Descriptor::from_code(head[8]).ok_or_else(|| bad("unknown descriptor"))?;
        let planes = match head[9] {
            NO_PLANES => None,
            c => Some(PlaneSelection::from_code(c).ok_or_else(|| bad("unknown plane selection"))?),
        };
        let field = |i: usize| {
            u64::from_le_bytes(head[10 + 8 * i..18 + 8 * i].try_into().unwrap()) as usize
        };
        let (bins, regions, frames) = (field(0), field(1), field(2));
        let count = bins
            .checked_mul(planes.map_or(1, |p| p.planes().len()))
            .and_then(|v| v.checked_mul(regions))
            .and_then(|v| v.checked_mul(frames))
            .ok_or_else(|| bad("header sizes overflow"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|_| bad("unreadable payload"))?;
        if bytes.len() != count * 8 {
            return Err(bad(&format!(
                "payload is {} bytes, expected {}",
                bytes.len(),
                count * 8
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(descriptor, planes, bins, regions, frames, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_binary(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(std::io::BufReader::new(file))
    }

    /// Text export: a header line, then one `region frame v0 v1 ...` line per histogram.
    /// Values use the shortest round-trip representation, so parsing is lossless.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "descriptor={} planes={} bins={} regions={} frames={}\n",
            self.descriptor,
            self.planes.map_or("-", PlaneSelection::as_str),
            self.bins,
            self.regions,
            self.frames
        );
        for r in 1..=self.regions {
            for f in 0..self.frames {
                out.push_str(&format!("{r} {f}"));
                for v in self.hist(r, f) {
                    out.push(' ');
                    out.push_str(&v.to_string());
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Schema(format!("feature text: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty".into()))?;
        let mut descriptor = None;
        let mut planes = None;
        let mut nums = [None; 3];
        for kv in header.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(format!("bad header field '{kv}'")))?;
            match k {
                "descriptor" => descriptor = Some(v.parse::<Descriptor>()?),
                "planes" => {
                    planes = if v == "-" {
                        Some(None)
                    } else {
                        Some(Some(v.parse()?))
                    }
                }
                "bins" | "regions" | "frames" => {
                    let i = ["bins", "regions", "frames"]
                        .iter()
                        .position(|n| *n == k)
                        .unwrap();
                    nums[i] = Some(v.parse::<usize>().map_err(|e| bad(format!("{k}: {e}")))?);
                }
                _ => return Err(bad(format!("unknown header field '{k}'"))),
            }
        }
        let missing = |n: &str| bad(format!("missing {n}"));
        let descriptor = descriptor.ok_or_else(|| missing("descriptor"))?;
        let planes = planes.ok_or_else(|| missing("planes"))?;
        let bins = nums[0].ok_or_else(|| missing("bins"))?;
        let regions = nums[1].ok_or_else(|| missing("regions"))?;
        let frames = nums[2].ok_or_else(|| missing("frames"))?;
        let mut data = Vec::new();
        for (row, line) in lines.enumerate() {
            let mut it = line.split_whitespace();
            let r: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("row {row}: region")))?;
            let f: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("row {row}: frame")))?;
            if r != row / frames.max(1) + 1 || f != row % frames.max(1) {
                return Err(bad(format!("row {row} is out of order")));
            }
            for s in it {
                data.push(
                    s.parse::<f64>()
                        .map_err(|e| bad(format!("row {row}: {e}")))?,
                );
            }
        }
        Self::new(descriptor, planes, bins, regions, frames, data)
    }
}
