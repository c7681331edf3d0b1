//! Piecewise affine warping over a triangle mesh.

use log::warn;

use super::delaunay::{barycentric, delaunay, Point, TriangleMesh};
use crate::error::{Error, Result};
use crate::frame::Frame;

const INSIDE_EPS: f64 = 1e-9;

/// Per-triangle affine map between two point sets sharing one triangulation.
#[derive(Debug, Clone)]
pub struct PiecewiseAffine {
    source: TriangleMesh,
    target: Vec<Point>,
}

impl PiecewiseAffine {
    /// Triangulates `source` and pairs it with `target` point for point.
    pub fn new(source: &[Point], target: &[Point]) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::Mismatch(format!(
                "{} source points but {} target points",
                source.len(),
                target.len()
            )));
        }
        Ok(Self {
            source: delaunay(source)?,
            target: target.to_vec(),
        })
    }

    pub fn from_mesh(source: TriangleMesh, target: Vec<Point>) -> Result<Self> {
        if source.vertices().len() != target.len() {
            return Err(Error::Mismatch(format!(
                "mesh has {} vertices but {} target points",
                source.vertices().len(),
                target.len()
            )));
        }
        Ok(Self { source, target })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.source
    }

    fn apply(&self, t: usize, (a, b, g): (f64, f64, f64)) -> Point {
        let [i, j, k] = self.source.triangles()[t];
        let (p, q, r) = (self.target[i], self.target[j], self.target[k]);
        [
            a * p[0] + b * q[0] + g * r[0],
            a * p[1] + b * q[1] + g * r[1],
        ]
    }

    /// Maps `x` from source to target space.
    ///
    /// Points outside the source hull are extrapolated with the affine map of
    /// the triangle they violate least.
    pub fn map_point(&self, x: Point) -> Result<Point> {
        let mut best: Option<(f64, usize, (f64, f64, f64))> = None;
        for t in 0..self.source.triangles().len() {
            let bc = match barycentric(x, self.source.corners(t)) {
                Ok(bc) => bc,
                Err(_) => continue,
            };
            let worst = bc.0.min(bc.1).min(bc.2);
            if worst >= -INSIDE_EPS {
                return Ok(self.apply(t, bc));
            }
            if best.is_none_or(|(w, _, _)| worst > w) {
                best = Some((worst, t, bc));
            }
        }
        best.map(|(_, t, bc)| self.apply(t, bc))
            .ok_or_else(|| Error::Geometry("mesh has no usable triangles".into()))
    }
}

/// Warps `image` so that mesh vertices move from `src_mesh.vertices()` to
/// `dst_points`, computed by reverse mapping.
///
/// Every output pixel centre inside a destination triangle is expressed in
/// barycentric coordinates of that triangle and sampled (bilinearly) at the
/// same coordinates of the source triangle. Pixels outside the destination
/// hull are 0.
pub fn pwa_warp(image: &Frame, src_mesh: &TriangleMesh, dst_points: &[Point]) -> Result<Frame> {
    let dst_mesh = src_mesh.with_vertices(dst_points.to_vec())?;
    let (w, h) = image.dims();
    let mut out = Frame::zeros(w, h);
    let mut filled = vec![false; w * h];
    for t in 0..dst_mesh.triangles().len() {
        let dst = dst_mesh.corners(t);
        let src = src_mesh.corners(t);
        if barycentric(dst[0], dst).is_err() {
            warn!("skipping degenerate destination triangle {t}");
            continue;
        }
        let min_x = dst
            .iter()
            .map(|p| p[0])
            .fold(f64::INFINITY, f64::min)
            .floor()
            .max(0.0);
        let max_x = dst
            .iter()
            .map(|p| p[0])
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil();
        let min_y = dst
            .iter()
            .map(|p| p[1])
            .fold(f64::INFINITY, f64::min)
            .floor()
            .max(0.0);
        let max_y = dst
            .iter()
            .map(|p| p[1])
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil();
        if max_x < 0.0 || max_y < 0.0 {
            continue;
        }
        let max_x = (max_x as usize).min(w - 1);
        let max_y = (max_y as usize).min(h - 1);
        for y in min_y as usize..=max_y {
            for x in min_x as usize..=max_x {
                if filled[y * w + x] {
                    continue;
                }
                let (a, b, g) = barycentric([x as f64, y as f64], dst)?;
                if a < -INSIDE_EPS || b < -INSIDE_EPS || g < -INSIDE_EPS {
                    continue;
                }
                let sx = a * src[0][0] + b * src[1][0] + g * src[2][0];
                let sy = a * src[0][1] + b * src[1][1] + g * src[2][1];
                out.set(x, y, image.sample_bilinear(sx, sy));
                filled[y * w + x] = true;
            }
        }
    }
    Ok(out)
}
