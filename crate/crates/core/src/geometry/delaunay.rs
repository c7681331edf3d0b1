//! Delaunay triangulation of small point sets (landmark meshes).
//!
//! Points are swept in lexicographic order to build an initial triangulation
//! of the convex hull, which is then legalized by Lawson edge flips. For
//! co-circular quadrilaterals the diagonal touching the lowest vertex index
//! wins, so output is a pure function of the input order.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Vertices plus counter-clockwise vertex-index triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

#[inline]
pub(crate) fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` lies strictly inside the circumcircle of CCW `(a, b, c)`.
#[inline]
pub(crate) fn incircle(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

struct Tolerance {
    orient: f64,
    incircle: f64,
}

impl Tolerance {
    fn for_points(points: &[Point]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let scale = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        Self {
            orient: 1e-12 * scale * scale,
            incircle: 1e-10 * scale.powi(4),
        }
    }
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        for t in &triangles {
            if t.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::Geometry(format!(
                    "triangle {t:?} indexes past the vertex list"
                )));
            }
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Same connectivity over a new vertex list of equal length.
    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Mismatch(format!(
                "mesh has {} vertices, got {} replacement points",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(Self {
            vertices,
            triangles: self.triangles.clone(),
        })
    }
}

/// Delaunay triangulation of `points` (at least three, not all collinear).
pub fn delaunay(points: &[Point]) -> Result<TriangleMesh> {
    if points.len() < 3 {
        return Err(Error::Geometry(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Geometry("non-finite point".into()));
    }
    let tol = Tolerance::for_points(points);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i][0]
            .total_cmp(&points[j][0])
            .then(points[i][1].total_cmp(&points[j][1]))
            .then(i.cmp(&j))
    });
    for w in order.windows(2) {
        if points[w[0]] == points[w[1]] {
            return Err(Error::Geometry(format!(
                "duplicate points {} and {}",
                w[0].min(w[1]),
                w[0].max(w[1])
            )));
        }
    }

    let mut triangles = sweep(points, &order, &tol)?;
    legalize(points, &mut triangles, &tol)?;

    for t in triangles.iter_mut() {
        let r = (0..3).min_by_key(|&i| t[i]).expect("three corners");
        t.rotate_left(r);
    }
    triangles.sort_unstable();
    TriangleMesh::new(points.to_vec(), triangles)
}

fn sweep(points: &[Point], order: &[usize], tol: &Tolerance) -> Result<Vec<[usize; 3]>> {
    let p = |i: usize| points[order[i]];
    let mut m = 2;
    while m < order.len() && orient(p(0), p(1), p(m)).abs() <= tol.orient {
        m += 1;
    }
    if m == order.len() {
        return Err(Error::Geometry("all points are collinear".into()));
    }
    let apex = order[m];
    let mut triangles = Vec::with_capacity(2 * points.len());
    let left = orient(p(0), p(1), p(m)) > 0.0;
    for i in 0..m - 1 {
        let (a, b) = (order[i], order[i + 1]);
        triangles.push(if left { [a, b, apex] } else { [b, a, apex] });
    }
    let mut hull: Vec<usize> = order[..m].to_vec();
    if !left {
        hull.reverse();
    }
    hull.push(apex);

    for &q in &order[m + 1..] {
        let qp = points[q];
        let len = hull.len();
        let visible: Vec<bool> = (0..len)
            .map(|i| orient(points[hull[i]], points[hull[(i + 1) % len]], qp) < -tol.orient)
            .collect();
        let Some(start) = (0..len).find(|&i| visible[i] && !visible[(i + len - 1) % len]) else {
            return Err(Error::Geometry(
                "point insertion found no visible hull edge".into(),
            ));
        };
        let mut chain = 0;
        while visible[(start + chain) % len] {
            let a = hull[(start + chain) % len];
            let b = hull[(start + chain + 1) % len];
            triangles.push([b, a, q]);
            chain += 1;
            if chain == len {
                return Err(Error::Geometry("point sees the entire hull".into()));
            }
        }
        hull.rotate_left(start);
        let mut next = Vec::with_capacity(hull.len() + 1);
        next.push(hull[0]);
        next.push(q);
        next.extend_from_slice(&hull[chain..]);
        hull = next;
    }
    Ok(triangles)
}

fn legalize(points: &[Point], triangles: &mut [[usize; 3]], tol: &Tolerance) -> Result<()> {
    let max_flips = 64 * points.len() * points.len() + 1024;
    let mut flips = 0;
    'outer: loop {
        // directed edge (a, b) -> (triangle, opposite vertex)
        let mut edges: HashMap<(usize, usize), (usize, usize)> =
            HashMap::with_capacity(3 * triangles.len());
        for (ti, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                edges.insert((t[k], t[(k + 1) % 3]), (ti, t[(k + 2) % 3]));
            }
        }
        for ti in 0..triangles.len() {
            let t = triangles[ti];
            for k in 0..3 {
                let (a, b, c) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                let Some(&(tj, d)) = edges.get(&(b, a)) else {
                    continue;
                };
                if tj < ti {
                    continue;
                }
                let (pa, pb, pc, pd) = (points[a], points[b], points[c], points[d]);
                let ic = incircle(pa, pb, pc, pd);
                let flip = if ic > tol.incircle {
                    true
                } else if ic >= -tol.incircle {
                    c.min(d) < a.min(b)
                } else {
                    false
                };
                if flip && orient(pa, pd, pc) > tol.orient && orient(pb, pc, pd) > tol.orient {
                    triangles[ti] = [a, d, c];
                    triangles[tj] = [b, c, d];
                    flips += 1;
                    if flips > max_flips {
                        return Err(Error::Geometry("edge flipping did not converge".into()));
                    }
                    continue 'outer;
                }
            }
        }
        return Ok(());
    }
}

/// Barycentric coordinates `(alpha, beta, gamma)` of `x` in triangle `tri`.
pub fn barycentric(x: Point, tri: [Point; 3]) -> Result<(f64, f64, f64)> {
    let [p1, p2, p3] = tri;
    let e2 = [p2[0] - p1[0], p2[1] - p1[1]];
    let e3 = [p3[0] - p1[0], p3[1] - p1[1]];
    let det = e2[0] * e3[1] - e2[1] * e3[0];
    let scale = (e2[0].hypot(e2[1]) * e3[0].hypot(e3[1])).max(f64::MIN_POSITIVE);
    if det.abs() <= 1e-12 * scale || !det.is_finite() {
        return Err(Error::Geometry("zero-area triangle".into()));
    }
    let r = [x[0] - p1[0], x[1] - p1[1]];
    let beta = (r[0] * e3[1] - r[1] * e3[0]) / det;
    let gamma = (e2[0] * r[1] - e2[1] * r[0]) / det;
    Ok((1.0 - (beta + gamma), beta, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn assert_delaunay(mesh: &TriangleMesh) {
        let v = mesh.vertices();
        let tol = Tolerance::for_points(v);
        for (ti, t) in mesh.triangles().iter().enumerate() {
            let [a, b, c] = mesh.corners(ti);
            assert!(orient(a, b, c) > 0.0, "triangle {t:?} not CCW");
            for (i, &p) in v.iter().enumerate() {
                if t.contains(&i) {
                    continue;
                }
                assert!(
                    incircle(a, b, c, p) <= tol.incircle,
                    "vertex {i} inside circumcircle of {t:?}"
                );
            }
        }
    }

    fn hull_area(points: &[Point]) -> f64 {
        // Andrew's monotone chain
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let mut lower: Vec<Point> = Vec::new();
        for &p in &pts {
            while lower.len() >= 2
                && orient(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0
            {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<Point> = Vec::new();
        for &p in pts.iter().rev() {
            while upper.len() >= 2
                && orient(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0
            {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        let n = lower.len();
        (0..n)
            .map(|i| {
                let (p, q) = (lower[i], lower[(i + 1) % n]);
                p[0] * q[1] - q[0] * p[1]
            })
            .sum::<f64>()
            / 2.0
    }

    fn mesh_area(mesh: &TriangleMesh) -> f64 {
        (0..mesh.triangles().len())
            .map(|t| {
                let [a, b, c] = mesh.corners(t);
                orient(a, b, c) / 2.0
            })
            .sum()
    }

    #[test]
    fn single_triangle() {
        let m = delaunay(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
    }

    #[test]
    fn unit_square_two_triangles() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let m = delaunay(&pts).unwrap();
        assert_eq!(m.triangles().len(), 2);
        let shared: Vec<usize> = (0..4)
            .filter(|v| m.triangles().iter().all(|t| t.contains(v)))
            .collect();
        assert_eq!(shared.len(), 2);
        // co-circular: the diagonal must include vertex 0
        assert!(shared.contains(&0), "{shared:?}");
    }

    #[test]
    fn cocircular_is_deterministic() {
        let pts = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        let a = delaunay(&pts).unwrap();
        let b = delaunay(&pts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.triangles().len(), 2);
        // diagonal through vertex 0 and 2
        assert!(a
            .triangles()
            .iter()
            .all(|t| t.contains(&0) && t.contains(&2)));
    }

    #[test]
    fn regular_polygon_fans_from_lowest_index() {
        let pts: Vec<Point> = (0..8)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 8.0;
                [a.cos(), a.sin()]
            })
            .collect();
        let m = delaunay(&pts).unwrap();
        assert_eq!(m.triangles().len(), 6);
        assert!(m.triangles().iter().all(|t| t.contains(&0)));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            delaunay(&[[0.0, 0.0], [1.0, 1.0]]),
            Err(Error::Geometry(_))
        ));
        let line: Vec<Point> = (0..5).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(delaunay(&line), Err(Error::Geometry(_))));
    }

    #[test]
    fn collinear_prefix_then_apex() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [1.5, 2.0]];
        let m = delaunay(&pts).unwrap();
        assert_delaunay(&m);
        assert!((mesh_area(&m) - hull_area(&pts)).abs() < 1e-12);
    }

    #[test]
    fn grid_points() {
        let pts: Vec<Point> = (0..25).map(|i| [(i % 5) as f64, (i / 5) as f64]).collect();
        let m = delaunay(&pts).unwrap();
        assert_eq!(m.triangles().len(), 32);
        assert_delaunay(&m);
    }

    #[test]
    fn barycentric_cases() {
        let tri = [[0.0, 0.0], [4.0, 0.0], [1.0, 3.0]];
        assert_eq!(barycentric(tri[0], tri).unwrap(), (1.0, 0.0, 0.0));
        let c = [(0.0 + 4.0 + 1.0) / 3.0, 1.0];
        let (a, b, g) = barycentric(c, tri).unwrap();
        for v in [a, b, g] {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let (a, b, g) = barycentric([5.0, 5.0], tri).unwrap();
        assert!([a, b, g].iter().any(|&v| !(0.0..=1.0).contains(&v)));
        assert!(barycentric([0.0, 0.0], [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).is_err());
    }

    fn point_set() -> impl Strategy<Value = Vec<Point>> {
        prop::collection::vec(
            (0.0f64..100.0, 0.0f64..100.0).prop_map(|(x, y)| [x, y]),
            3..50,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn empty_circumcircle_and_hull_cover(points in point_set()) {
            match delaunay(&points) {
                Ok(mesh) => {
                    assert_delaunay(&mesh);
                    let ha = hull_area(&points);
                    prop_assert!((mesh_area(&mesh) - ha).abs() <= 1e-9 * ha.max(1.0));
                }
                Err(Error::Geometry(_)) => {}
                Err(e) => panic!("{e}"),
            }
        }

        #[test]
        fn barycentric_reconstruction(
            tri in prop::array::uniform3((-50.0f64..50.0, -50.0f64..50.0)),
            w in (0.0f64..1.0, 0.0f64..1.0),
        ) {
            let tri = tri.map(|(x, y)| [x, y]);
            prop_assume!(orient(tri[0], tri[1], tri[2]).abs() > 1.0);
            let (mut s, mut t) = w;
            if s + t > 1.0 { s = 1.0 - s; t = 1.0 - t; }
            let x = [
                tri[0][0] + s * (tri[1][0] - tri[0][0]) + t * (tri[2][0] - tri[0][0]),
                tri[0][1] + s * (tri[1][1] - tri[0][1]) + t * (tri[2][1] - tri[0][1]),
            ];
            let (a, b, g) = barycentric(x, tri).unwrap();
            prop_assert!((a + b + g - 1.0).abs() < 1e-9);
            let rx = a * tri[0][0] + b * tri[1][0] + g * tri[2][0];
            let ry = a * tri[0][1] + b * tri[1][1] + g * tri[2][1];
            prop_assert!((rx - x[0]).abs() < 1e-9 && (ry - x[1]).abs() < 1e-9);
            for v in [a, b, g] { prop_assert!((-1e-9..=1.0 + 1e-9).contains(&v)); }
        }
    }
}
