//! Rasterized region masks fitted to an individual face.

use super::atlas::RegionAtlas;
use super::delaunay::Point;
use super::warp::PiecewiseAffine;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::ingest::{LandmarkSet, LANDMARK_COUNT};

/// Region labels at clip resolution. Label 0 is background; regions are `1..=count`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    areas: Vec<usize>,
    pixels: Vec<Vec<usize>>,
}

impl RegionMask {
    pub fn from_labels(
        width: usize,
        height: usize,
        labels: Vec<u8>,
        region_count: usize,
    ) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Mismatch(format!(
                "{} labels for a {width}x{height} mask",
                labels.len()
            )));
        }
        let mut pixels = vec![Vec::new(); region_count];
        for (i, &l) in labels.iter().enumerate() {
            if l == 0 {
                continue;
            }
            let r = l as usize;
            if r > region_count {
                return Err(Error::Validation(format!(
                    "label {r} exceeds region count {region_count}"
                )));
            }
            pixels[r - 1].push(i);
        }
        let areas = pixels.iter().map(Vec::len).collect();
        Ok(Self {
            width,
            height,
            labels,
            areas,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn region_count(&self) -> usize {
        self.areas.len()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Pixel count of region `id` (1-based).
    pub fn area(&self, id: usize) -> usize {
        self.areas[id - 1]
    }

    pub fn areas(&self) -> &[usize] {
        &self.areas
    }

    /// Row-major pixel indices of region `id` (1-based), ascending.
    pub fn pixels(&self, id: usize) -> &[usize] {
        &self.pixels[id - 1]
    }

    /// Fails with the first region that rasterized to nothing.
    pub fn ensure_all_present(&self) -> Result<()> {
        match self.areas.iter().position(|&a| a == 0) {
            Some(i) => Err(Error::Fit(format!("region {} covers no pixels", i + 1))),
            None => Ok(()),
        }
    }

    /// Debug rendering: each label scaled to a gray level.
    pub fn to_frame(&self) -> Frame {
        let n = self.region_count().max(1) as f64;
        Frame::new(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l as f64 / n).collect(),
        )
        .expect("dims match")
    }
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    if cross.abs() > 1e-9 * len.max(1.0) {
        return false;
    }
    let dot = (p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1]);
    dot >= -1e-9 && dot <= len * len + 1e-9
}

/// Pixel-centre containment; points on the boundary count as inside.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if on_segment(p, a, b) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let xi = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < xi {
                inside = !inside;
            }
        }
    }
    inside
}

/// Rasterizes polygons in order; a pixel keeps the first (lowest id) polygon
/// containing its centre, so overlaps and boundary ties go to the lower id.
pub fn rasterize(polygons: &[Vec<Point>], width: usize, height: usize) -> Result<RegionMask> {
    if polygons.len() > u8::MAX as usize {
        return Err(Error::Validation(
            "at most 255 regions are supported".into(),
        ));
    }
    let mut labels = vec![0u8; width * height];
    for (i, poly) in polygons.iter().enumerate() {
        let id = (i + 1) as u8;
        let min_x = poly
            .iter()
            .map(|p| p[0])
            .fold(f64::INFINITY, f64::min)
            .floor()
            .max(0.0);
        let max_x = poly
            .iter()
            .map(|p| p[0])
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil();
        let min_y = poly
            .iter()
            .map(|p| p[1])
            .fold(f64::INFINITY, f64::min)
            .floor()
            .max(0.0);
        let max_y = poly
            .iter()
            .map(|p| p[1])
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil();
        if max_x < 0.0 || max_y < 0.0 || min_x >= width as f64 || min_y >= height as f64 {
            continue;
        }
        let max_x = (max_x as usize).min(width - 1);
        let max_y = (max_y as usize).min(height - 1);
        for y in min_y as usize..=max_y {
            for x in min_x as usize..=max_x {
                let idx = y * width + x;
                if labels[idx] == 0 && point_in_polygon([x as f64, y as f64], poly) {
                    labels[idx] = id;
                }
            }
        }
    }
    RegionMask::from_labels(width, height, labels, polygons.len())
}

/// Warps every atlas polygon onto the face described by `landmarks` and rasterizes.
///
/// The mask follows the face; face pixels are never resampled.
pub fn fit_region_mask(
    atlas: &RegionAtlas,
    landmarks: &LandmarkSet,
    frame_dims: (usize, usize),
) -> Result<RegionMask> {
    let (width, height) = frame_dims;
    if landmarks.points().len() != atlas.canonical_points.len() {
        return Err(Error::Mismatch(format!(
            "{} landmarks for an atlas of {} points",
            landmarks.points().len(),
            atlas.canonical_points.len()
        )));
    }
    debug_assert_eq!(landmarks.points().len(), LANDMARK_COUNT);
    landmarks.validate_bounds(width, height)?;
    let pwa = PiecewiseAffine::new(&atlas.canonical_points, landmarks.points())?;
    let polygons: Vec<Vec<Point>> = atlas
        .regions
        .iter()
        .map(|r| r.polygon.iter().map(|&p| pwa.map_point(p)).collect())
        .collect::<Result<_>>()?;
    let mask = rasterize(&polygons, width, height)?;
    if let Some(i) = mask.areas().iter().position(|&a| a == 0) {
        let region = &atlas.regions[i];
        return Err(Error::Fit(format!(
            "region {} ({}) rasterizes to zero pixels",
            region.region_id, region.name
        )));
    }
    Ok(mask)
}

/// The atlas rasterized in its own canonical frame.
pub fn canonical_mask(atlas: &RegionAtlas) -> Result<RegionMask> {
    let polygons: Vec<Vec<Point>> = atlas.regions.iter().map(|r| r.polygon.clone()).collect();
    rasterize(&polygons, atlas.canonical_size[0], atlas.canonical_size[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical_landmarks(atlas: &RegionAtlas, scale: f64) -> LandmarkSet {
        let pts = atlas
            .canonical_points
            .iter()
            .map(|p| [p[0] * scale, p[1] * scale])
            .collect();
        LandmarkSet::new(pts, 0).unwrap()
    }

    #[test]
    fn identity_fit_equals_canonical_rasterization() {
        let atlas = RegionAtlas::builtin();
        let [w, h] = atlas.canonical_size;
        let fitted = fit_region_mask(&atlas, &canonical_landmarks(&atlas, 1.0), (w, h)).unwrap();
        let canonical = canonical_mask(&atlas).unwrap();
        assert_eq!(fitted, canonical);
        canonical.ensure_all_present().unwrap();
    }

    #[test]
    fn doubled_face_quadruples_areas() {
        let atlas = RegionAtlas::builtin();
        let [w, h] = atlas.canonical_size;
        let canonical = canonical_mask(&atlas).unwrap();
        let fitted =
            fit_region_mask(&atlas, &canonical_landmarks(&atlas, 2.0), (2 * w, 2 * h)).unwrap();
        for id in 1..=26 {
            let expected = 4.0 * canonical.area(id) as f64;
            let got = fitted.area(id) as f64;
            assert!(
                (got - expected).abs() <= 0.05 * expected,
                "region {id}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn landmark_outside_frame_rejected() {
        let atlas = RegionAtlas::builtin();
        let mut pts = atlas.canonical_points.clone();
        pts[10] = [500.0, 3.0];
        let lm = LandmarkSet::new(pts, 0).unwrap();
        assert!(matches!(
            fit_region_mask(&atlas, &lm, (128, 128)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn collapsed_region_is_a_fit_error() {
        let mut atlas = RegionAtlas::builtin();
        // A sliver far from any pixel centre.
        atlas.regions[4].polygon = vec![[40.2, 30.2], [40.8, 30.2], [40.5, 30.6]];
        let lm = canonical_landmarks(&atlas, 1.0);
        let err = fit_region_mask(&atlas, &lm, (128, 128)).unwrap_err();
        assert!(err.to_string().contains("region 5"), "{err}");
    }

    #[test]
    fn partition_is_exclusive() {
        let atlas = RegionAtlas::builtin();
        let mask = canonical_mask(&atlas).unwrap();
        let total: usize = mask.areas().iter().sum();
        assert!(total <= 128 * 128);
        let labelled = mask.labels().iter().filter(|&&l| l > 0).count();
        assert_eq!(total, labelled);
    }

    #[test]
    fn boundary_ties_go_to_lower_id() {
        let a = vec![[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]];
        let b = vec![[4.0, 0.0], [8.0, 0.0], [8.0, 4.0], [4.0, 4.0]];
        let m = rasterize(&[a, b], 10, 6).unwrap();
        assert_eq!(m.label(4, 2), 1);
        assert_eq!(m.label(5, 2), 2);
        assert_eq!(m.areas(), &[25, 20]);
    }
}
