//! Planar rigid transforms and polygon primitives.
//!
//! Poses are SE(2) elements with the heading normalized to `[0, 2π)`.
//! Polygons are simple and counter-clockwise; each one carries a convex
//! decomposition (itself when convex, ear-clipped triangles otherwise) so
//! that intersection reduces to pairwise separating-axis tests.
//!
//! Touching boundaries count as intersecting.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl std::ops::Add for Point2 {
    type Output = Point2;

    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;

    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_to_pi(theta: f64) -> f64 {
    let r = normalize_angle(theta);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Shortest unsigned distance between two angles on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_to_pi(a - b).abs()
}

/// Planar rigid transform. Heading is kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawPose")]
pub struct Se2Pose {
    x: f64,
    y: f64,
    theta: f64,
}

#[derive(Deserialize)]
struct RawPose {
    x: f64,
    y: f64,
    theta: f64,
}

impl From<RawPose> for Se2Pose {
    fn from(r: RawPose) -> Self {
        Se2Pose::new(r.x, r.y, r.theta)
    }
}

impl Default for Se2Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Se2Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(c, s)
    }

    /// Maps a point expressed in this frame into the parent frame.
    pub fn apply(&self, p: Point2) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(c * p.x - s * p.y + self.x, s * p.x + c * p.y + self.y)
    }

    /// Position distance and circular heading distance to `other`.
    pub fn distance(&self, other: &Se2Pose) -> (f64, f64) {
        (
            (self.position() - other.position()).norm(),
            circular_distance(self.theta, other.theta),
        )
    }
}

/// `a ∘ b`: applies `b`, then `a`.
pub fn compose(a: &Se2Pose, b: &Se2Pose) -> Se2Pose {
    let p = a.apply(b.position());
    Se2Pose::new(p.x, p.y, a.theta + b.theta)
}

pub fn invert(p: &Se2Pose) -> Se2Pose {
    let (s, c) = p.theta.sin_cos();
    Se2Pose::new(-(c * p.x + s * p.y), s * p.x - c * p.y, -p.theta)
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point2,
    pub max: Point2,
}

impl Aabb {
    fn of(points: &[Point2]) -> Self {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Self { min, max }
    }

    /// Closed-box overlap (touching counts).
    pub fn overlaps(&self, o: &Aabb) -> bool {
        !(self.max.x < o.min.x || o.max.x < self.min.x || self.max.y < o.min.y || o.max.y < self.min.y)
    }
}

/// Simple counter-clockwise polygon with a cached convex decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point2>,
    parts: Vec<Vec<Point2>>,
    aabb: Aabb,
}

impl Polygon {
    /// Validates and builds a polygon. Clockwise input is reversed to CCW.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        let area = signed_area(&vertices);
        if area.abs() < 1e-15 {
            return Err(Error::InvalidPolygon("zero area".into()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        if !is_simple(&vertices) {
            return Err(Error::InvalidPolygon("self-intersecting outline".into()));
        }
        let parts = if is_convex(&vertices) {
            vec![vertices.clone()]
        } else {
            ear_clip(&vertices)?
        };
        let aabb = Aabb::of(&vertices);
        Ok(Self {
            vertices,
            parts,
            aabb,
        })
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::InvalidPolygon(format!(
                "degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        let vertices = vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ];
        let aabb = Aabb::of(&vertices);
        Ok(Self {
            parts: vec![vertices.clone()],
            vertices,
            aabb,
        })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    /// Convex pieces whose union is this polygon.
    pub fn convex_parts(&self) -> &[Vec<Point2>] {
        &self.parts
    }

    pub fn aabb(&self) -> Aabb {
        self.aabb
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn is_convex(&self) -> bool {
        self.parts.len() == 1
    }

    pub fn centroid(&self) -> Point2 {
        let v = &self.vertices;
        let n = v.len();
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let p = v[i];
            let q = v[(i + 1) % n];
            let c = p.cross(q);
            a2 += c;
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        Point2::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    /// Edges as `(start, end)` pairs in CCW order.
    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn translated(&self, d: Point2) -> Polygon {
        self.map_points(|p| p + d)
    }

    fn map_points(&self, f: impl Fn(Point2) -> Point2) -> Polygon {
        let vertices: Vec<Point2> = self.vertices.iter().map(|&p| f(p)).collect();
        let parts = self
            .parts
            .iter()
            .map(|part| part.iter().map(|&p| f(p)).collect())
            .collect();
        let aabb = Aabb::of(&vertices);
        Polygon {
            vertices,
            parts,
            aabb,
        }
    }
}

/// Rigidly moves a polygon; vertex order (and hence CCW orientation) is kept.
pub fn transform_polygon(poly: &Polygon, pose: &Se2Pose) -> Polygon {
    let (s, c) = pose.theta.sin_cos();
    let (tx, ty) = (pose.x, pose.y);
    poly.map_points(|p| Point2::new(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty))
}

/// True iff the closed regions overlap or touch.
pub fn polygons_intersect(a: &Polygon, b: &Polygon) -> bool {
    if !a.aabb.overlaps(&b.aabb) {
        return false;
    }
    a.parts
        .iter()
        .any(|pa| b.parts.iter().any(|pb| convex_intersect(pa, pb)))
}

/// Separating-axis test on two convex CCW polygons; touching counts.
pub fn convex_intersect(a: &[Point2], b: &[Point2]) -> bool {
    !has_separating_edge(a, b) && !has_separating_edge(b, a)
}

fn has_separating_edge(a: &[Point2], b: &[Point2]) -> bool {
    let n = a.len();
    for i in 0..n {
        let p = a[i];
        let q = a[(i + 1) % n];
        let axis = (q - p).perp();
        let (amin, amax) = project(a, axis);
        let (bmin, bmax) = project(b, axis);
        if amax < bmin || bmax < amin {
            return true;
        }
    }
    false
}

fn project(poly: &[Point2], axis: Point2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in poly {
        let d = p.dot(axis);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

pub fn signed_area(v: &[Point2]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>()
}

fn is_convex(v: &[Point2]) -> bool {
    let n = v.len();
    (0..n).all(|i| {
        let a = v[i];
        let b = v[(i + 1) % n];
        let c = v[(i + 2) % n];
        (b - a).cross(c - b) >= 0.0
    })
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test.
pub fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

fn is_simple(v: &[Point2]) -> bool {
    let n = v.len();
    for i in 0..n {
        let (a1, a2) = (v[i], v[(i + 1) % n]);
        if a1 == a2 {
            return false;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (b1, b2) = (v[j], v[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

fn point_in_triangle(p: Point2, a: Point2, b: Point2, c: Point2) -> bool {
    orient(a, b, p) >= 0.0 && orient(b, c, p) >= 0.0 && orient(c, a, p) >= 0.0
}

/// Ear-clipping triangulation of a simple CCW polygon.
fn ear_clip(v: &[Point2]) -> Result<Vec<Vec<Point2>>> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    let mut tris = Vec::with_capacity(v.len() - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for k in 0..m {
            let ia = idx[(k + m - 1) % m];
            let ib = idx[k];
            let ic = idx[(k + 1) % m];
            let (a, b, c) = (v[ia], v[ib], v[ic]);
            if orient(a, b, c) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&j| {
                j != ia && j != ib && j != ic && point_in_triangle(v[j], a, b, c)
            });
            if blocked {
                continue;
            }
            tris.push(vec![a, b, c]);
            idx.remove(k);
            clipped = true;
            break;
        }
        if !clipped {
            return Err(Error::InvalidPolygon("triangulation failed".into()));
        }
    }
    let (a, b, c) = (v[idx[0]], v[idx[1]], v[idx[2]]);
    if orient(a, b, c) > 0.0 {
        tris.push(vec![a, b, c]);
    }
    Ok(tris)
}

/// Crossing-number point membership; boundary points may land either way.
pub fn point_in_polygon(p: Point2, poly: &Polygon) -> bool {
    let v = &poly.vertices;
    let n = v.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (v[i], v[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Polygon {
        Polygon::rect(-0.5, -0.5, 0.5, 0.5).unwrap()
    }

    fn pose_close(a: &Se2Pose, b: &Se2Pose, tol: f64) -> bool {
        let (dp, da) = a.distance(b);
        dp < tol && da < tol
    }

    #[test]
    fn compose_identity_and_rotation() {
        let p = Se2Pose::new(0.3, -0.2, 1.1);
        assert_eq!(compose(&Se2Pose::identity(), &p), p);
        let r = compose(&Se2Pose::new(1.0, 0.0, PI / 2.0), &Se2Pose::new(2.0, 0.0, 0.0));
        assert!(pose_close(&r, &Se2Pose::new(1.0, 2.0, PI / 2.0), 1e-12));
    }

    #[test]
    fn invert_examples() {
        assert!(pose_close(&invert(&Se2Pose::identity()), &Se2Pose::identity(), 1e-15));
        assert!(pose_close(
            &invert(&Se2Pose::new(1.0, 0.0, 0.0)),
            &Se2Pose::new(-1.0, 0.0, 0.0),
            1e-15
        ));
    }

    #[test]
    fn angle_normalization_edge() {
        assert_eq!(normalize_angle(-1e-18), 0.0);
        assert!(normalize_angle(-0.1) > 6.0);
        assert_eq!(Se2Pose::new(0.0, 0.0, TAU).theta(), 0.0);
        assert!((wrap_to_pi(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_polygons() {
        assert!(Polygon::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)]).is_err());
        // collinear
        assert!(Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 0.0)
        ])
        .is_err());
        // bow-tie
        assert!(Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0)
        ])
        .is_err());
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let p = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
        ])
        .unwrap();
        assert!(p.area() > 0.0);
    }

    #[test]
    fn square_rotated_by_pi_is_negated() {
        let sq = Polygon::rect(0.0, 0.0, 1.0, 1.0).unwrap();
        let t = transform_polygon(&sq, &Se2Pose::new(0.0, 0.0, PI));
        assert!(t.area() > 0.0);
        for (a, b) in sq.vertices().iter().zip(t.vertices()) {
            assert!((a.x + b.x).abs() < 1e-12 && (a.y + b.y).abs() < 1e-12);
        }
    }

    #[test]
    fn nonconvex_decomposes_into_triangles() {
        // L-shape
        let l = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 1.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 2.0),
            Point2::new(0.0, 2.0),
        ])
        .unwrap();
        assert!(!l.is_convex());
        let tri_area: f64 = l.convex_parts().iter().map(|t| signed_area(t)).sum();
        assert!((tri_area - l.area()).abs() < 1e-12);
        // a square sitting in the notch touches but does not overlap
        let notch = Polygon::rect(1.2, 1.2, 1.8, 1.8).unwrap();
        assert!(!polygons_intersect(&l, &notch));
        let poking = Polygon::rect(0.9, 1.2, 1.8, 1.8).unwrap();
        assert!(polygons_intersect(&l, &poking));
    }

    #[test]
    fn disjoint_identical_and_touching() {
        let a = unit_square();
        let b = a.translated(Point2::new(3.0, 0.0));
        assert!(!polygons_intersect(&a, &b));
        assert!(polygons_intersect(&a, &a.clone()));
        let touching = a.translated(Point2::new(1.0, 0.0));
        assert!(polygons_intersect(&a, &touching));
        let corner = a.translated(Point2::new(1.0, 1.0));
        assert!(polygons_intersect(&a, &corner));
    }

    #[test]
    fn point_membership() {
        let sq = unit_square();
        assert!(point_in_polygon(Point2::new(0.1, 0.2), &sq));
        assert!(!point_in_polygon(Point2::new(0.6, 0.2), &sq));
    }
}
