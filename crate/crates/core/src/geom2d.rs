//! Planar geometry kernel: points, clockwise boundary loops, quad elements and
//! the predicates the meshing environment is built on.
//!
//! Predicates use an absolute tolerance of [`EPS`] after dividing lengths by a
//! local scale, so results do not depend on the units of the input.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for predicates, in scale-normalized coordinates.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("polygon needs at least {needed} vertices, got {got}")]
    TooFewVertices { needed: usize, got: usize },
    #[error("non-finite coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("vertices {0} and {1} coincide")]
    Coincident(usize, usize),
    #[error("boundary is not simple: edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("boundary is counterclockwise; expected clockwise")]
    CounterClockwise,
    #[error("boundary has zero area")]
    ZeroArea,
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("index {index} out of range for {len} vertices")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("bad generator parameter: {0}")]
    BadParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
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

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Point at `radius` from `self` in direction `angle` (radians, CCW from +x).
    pub fn polar_offset(self, radius: f64, angle: f64) -> Point2 {
        Point2::new(self.x + radius * angle.cos(), self.y + radius * angle.sin())
    }

    pub fn lerp(self, o: Point2, t: f64) -> Point2 {
        self + (o - self) * t
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Shoelace sum. Negative for clockwise input.
pub fn signed_area(points: &[Point2]) -> Result<f64, GeomError> {
    if points.len() < 3 {
        return Err(GeomError::TooFewVertices { needed: 3, got: points.len() });
    }
    let n = points.len();
    let mut sum = 0.0;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        sum += a.cross(b);
    }
    Ok(0.5 * sum)
}

/// Counterclockwise angle in `[0, 2π)` that rotates direction `from` onto `to`.
pub fn ccw_angle(from: Point2, to: Point2) -> f64 {
    let a = from.cross(to).atan2(from.dot(to));
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Angle at `apex` swept counterclockwise from `apex→start` to `apex→end`, radians in `[0, 2π)`.
pub fn sweep_angle(start: Point2, apex: Point2, end: Point2) -> f64 {
    ccw_angle(start - apex, end - apex)
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

fn bbox_scale(pts: &[Point2]) -> f64 {
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let s = (max_x - min_x).max(max_y - min_y);
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Sign of `orient` with values within `tol` treated as collinear.
fn orient_sign(a: Point2, b: Point2, c: Point2, tol: f64) -> i8 {
    let o = orient(a, b, c);
    if o > tol {
        1
    } else if o < -tol {
        -1
    } else {
        0
    }
}

fn on_segment_box(p: Point2, a: Point2, b: Point2, tol: f64) -> bool {
    p.x >= a.x.min(b.x) - tol
        && p.x <= a.x.max(b.x) + tol
        && p.y >= a.y.min(b.y) - tol
        && p.y <= a.y.max(b.y) + tol
}

/// True iff the closed segments `a1a2` and `b1b2` share at least one point.
pub fn segments_intersect(a1: Point2, a2: Point2, b1: Point2, b2: Point2) -> bool {
    let scale = bbox_scale(&[a1, a2, b1, b2]);
    let area_tol = EPS * scale * scale;
    let len_tol = EPS * scale;
    let d1 = orient_sign(b1, b2, a1, area_tol);
    let d2 = orient_sign(b1, b2, a2, area_tol);
    let d3 = orient_sign(a1, a2, b1, area_tol);
    let d4 = orient_sign(a1, a2, b2, area_tol);
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment_box(a1, b1, b2, len_tol))
        || (d2 == 0 && on_segment_box(a2, b1, b2, len_tol))
        || (d3 == 0 && on_segment_box(b1, a1, a2, len_tol))
        || (d4 == 0 && on_segment_box(b2, a1, a2, len_tol))
}

/// Euclidean distance from `p` to the closed segment `s1s2`.
pub fn point_segment_distance(p: Point2, s1: Point2, s2: Point2) -> f64 {
    let d = s2 - s1;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.distance(s1);
    }
    let t = ((p - s1).dot(d) / len2).clamp(0.0, 1.0);
    p.distance(s1 + d * t)
}

/// Parameter `t` along the ray `origin + t·dir` (with `|dir| = 1`) at which it
/// first meets segment `s1s2`, if it does so for `t > 0`.
pub fn ray_segment_hit(origin: Point2, dir: Point2, s1: Point2, s2: Point2) -> Option<f64> {
    let e = s2 - s1;
    let denom = dir.cross(e);
    let w = s1 - origin;
    let scale = e.norm().max(w.norm()).max(1e-300);
    if denom.abs() <= EPS * scale {
        // Parallel; a collinear overlap hits at the nearer endpoint.
        if w.cross(dir).abs() > EPS * scale {
            return None;
        }
        let t1 = w.dot(dir);
        let t2 = (s2 - origin).dot(dir);
        let t = match (t1 > 0.0, t2 > 0.0) {
            (true, true) => t1.min(t2),
            (true, false) => t1,
            (false, true) => t2,
            (false, false) => return None,
        };
        return Some(t);
    }
    let t = w.cross(e) / denom;
    let u = w.cross(dir) / denom;
    if t > 0.0 && (-EPS..=1.0 + EPS).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Maps points to `(|p − origin| / scale, angle)` where the angle is measured
/// counterclockwise from the direction `origin → ref_point`, in `(−π, π]`.
///
/// For a clockwise boundary whose reference direction points at the previous
/// vertex, the domain interior lies on the positive-angle side.
pub fn polar_normalize(
    points: &[Point2],
    origin: Point2,
    ref_point: Point2,
    scale: f64,
) -> Result<Vec<(f64, f64)>, GeomError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(GeomError::BadScale(scale));
    }
    let reference = ref_point - origin;
    if reference.norm() <= EPS * scale {
        return Err(GeomError::Coincident(0, 1));
    }
    Ok(points
        .iter()
        .map(|&p| {
            let v = p - origin;
            let angle = reference.cross(v).atan2(reference.dot(v));
            (v.norm() / scale, angle)
        })
        .collect())
}

/// Strict point-in-polygon test: false on or within `tol` of the boundary.
pub fn point_strictly_inside(p: Point2, vertices: &[Point2], tol: f64) -> bool {
    let n = vertices.len();
    let mut inside = false;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if point_segment_distance(p, a, b) <= tol {
            return false;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Brute-force check that no two non-adjacent edges of the closed loop meet.
/// Returns the first offending edge pair.
pub fn find_self_intersection(vertices: &[Point2]) -> Option<(usize, usize)> {
    let n = vertices.len();
    for i in 0..n {
        let a1 = vertices[i];
        let a2 = vertices[(i + 1) % n];
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let b1 = vertices[j];
            let b2 = vertices[(j + 1) % n];
            if segments_intersect(a1, a2, b1, b2) {
                return Some((i, j));
            }
        }
    }
    // Adjacent edges may still fold back onto each other.
    for i in 0..n {
        let prev = vertices[(i + n - 1) % n];
        let cur = vertices[i];
        let next = vertices[(i + 1) % n];
        let a = prev - cur;
        let b = next - cur;
        let scale = a.norm().max(b.norm());
        if a.cross(b).abs() <= EPS * scale * scale && a.dot(b) > 0.0 {
            return Some(((i + n - 1) % n, i));
        }
    }
    None
}

/// An ordered, closed, simple, clockwise loop of vertices: the meshing front.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyBoundary {
    vertices: Vec<Point2>,
    perimeter: f64,
}

impl PolyBoundary {
    pub const MIN_VERTICES: usize = 4;

    /// Validates and stores a clockwise boundary. Counterclockwise input is
    /// rejected unless `auto_reverse` is set, in which case it is reversed.
    pub fn with_orientation(mut vertices: Vec<Point2>, auto_reverse: bool) -> Result<Self, GeomError> {
        if vertices.len() < Self::MIN_VERTICES {
            return Err(GeomError::TooFewVertices { needed: Self::MIN_VERTICES, got: vertices.len() });
        }
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(GeomError::NonFinite(i));
        }
        let scale = bbox_scale(&vertices);
        let n = vertices.len();
        for i in 0..n {
            let j = (i + 1) % n;
            if vertices[i].distance(vertices[j]) <= EPS * scale {
                return Err(GeomError::Coincident(i, j));
            }
        }
        let area = signed_area(&vertices)?;
        if area.abs() <= EPS * scale * scale {
            return Err(GeomError::ZeroArea);
        }
        if area > 0.0 {
            if !auto_reverse {
                return Err(GeomError::CounterClockwise);
            }
            vertices.reverse();
        }
        if let Some((i, j)) = find_self_intersection(&vertices) {
            return Err(GeomError::SelfIntersecting(i, j));
        }
        Ok(Self::from_trusted(vertices))
    }

    /// Clockwise input only.
    pub fn new(vertices: Vec<Point2>) -> Result<Self, GeomError> {
        Self::with_orientation(vertices, false)
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_trusted(vertices: Vec<Point2>) -> Self {
        let n = vertices.len();
        let perimeter = (0..n).map(|i| vertices[i].distance(vertices[(i + 1) % n])).sum();
        Self { vertices, perimeter }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    /// Wraps `i` cyclically; negative offsets are allowed.
    pub fn index(&self, i: isize) -> usize {
        i.rem_euclid(self.vertices.len() as isize) as usize
    }

    /// Vertex at a cyclic offset from `i`.
    pub fn at(&self, i: usize, offset: isize) -> Point2 {
        self.vertices[self.index(i as isize + offset)]
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices).expect("boundary has at least four vertices")
    }

    /// Absolute enclosed area.
    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        self.vertices[i].distance(self.at(i, 1))
    }

    /// `(shortest, longest)` edge length.
    pub fn edge_length_range(&self) -> (f64, f64) {
        (0..self.len()).map(|i| self.edge_length(i)).fold((f64::INFINITY, 0.0), |(lo, hi), l| (lo.min(l), hi.max(l)))
    }

    /// Interior angle at vertex `i`, radians in `(0, 2π)`.
    pub fn interior_angle_rad(&self, i: usize) -> Result<f64, GeomError> {
        let n = self.len();
        if i >= n {
            return Err(GeomError::IndexOutOfRange { index: i, len: n });
        }
        let prev = self.at(i, -1);
        let next = self.at(i, 1);
        let cur = self.vertices[i];
        if prev.distance(cur) == 0.0 {
            return Err(GeomError::Coincident(self.index(i as isize - 1), i));
        }
        if next.distance(cur) == 0.0 {
            return Err(GeomError::Coincident(i, self.index(i as isize + 1)));
        }
        // Clockwise storage puts the interior counterclockwise of prev.
        Ok(sweep_angle(prev, cur, next))
    }

    /// Interior angle at vertex `i` in degrees.
    pub fn interior_angle(&self, i: usize) -> Result<f64, GeomError> {
        self.interior_angle_rad(i).map(f64::to_degrees)
    }

    pub fn contains_strictly(&self, p: Point2, tol: f64) -> bool {
        point_strictly_inside(p, &self.vertices, tol)
    }

    pub fn is_simple(&self) -> bool {
        find_self_intersection(&self.vertices).is_none()
    }

    /// Characteristic length used to scale tolerances.
    pub fn scale(&self) -> f64 {
        bbox_scale(&self.vertices)
    }
}

/// Interior angle in degrees at `i` of a closed loop given as a slice (clockwise).
pub fn interior_angle(vertices: &[Point2], i: usize) -> Result<f64, GeomError> {
    let n = vertices.len();
    if n < 3 {
        return Err(GeomError::TooFewVertices { needed: 3, got: n });
    }
    if i >= n {
        return Err(GeomError::IndexOutOfRange { index: i, len: n });
    }
    let prev = vertices[(i + n - 1) % n];
    let next = vertices[(i + 1) % n];
    let cur = vertices[i];
    if prev == cur {
        return Err(GeomError::Coincident((i + n - 1) % n, i));
    }
    if next == cur {
        return Err(GeomError::Coincident(i, (i + 1) % n));
    }
    Ok(sweep_angle(prev, cur, next).to_degrees())
}

/// Four corners in counterclockwise order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadElement {
    pub corners: [Point2; 4],
}

impl QuadElement {
    pub fn new(corners: [Point2; 4]) -> Self {
        Self { corners }
    }

    /// Signed area; positive for counterclockwise corners.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.corners).expect("four corners")
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn edge_lengths(&self) -> [f64; 4] {
        let c = &self.corners;
        [c[0].distance(c[1]), c[1].distance(c[2]), c[2].distance(c[3]), c[3].distance(c[0])]
    }

    pub fn diagonals(&self) -> [f64; 2] {
        let c = &self.corners;
        [c[0].distance(c[2]), c[1].distance(c[3])]
    }

    /// Interior angles in degrees, assuming counterclockwise corners.
    pub fn interior_angles(&self) -> [f64; 4] {
        let c = &self.corners;
        let mut out = [0.0; 4];
        for (i, slot) in out.iter_mut().enumerate() {
            let prev = c[(i + 3) % 4];
            let next = c[(i + 1) % 4];
            *slot = sweep_angle(next, c[i], prev).to_degrees();
        }
        out
    }

    pub fn is_simple(&self) -> bool {
        let c = &self.corners;
        !segments_intersect(c[0], c[1], c[2], c[3]) && !segments_intersect(c[1], c[2], c[3], c[0])
    }

    /// Simple, positively oriented, every corner strictly convex.
    pub fn is_convex_ccw(&self) -> bool {
        if !self.corners.iter().all(|p| p.is_finite()) {
            return false;
        }
        let scale = bbox_scale(&self.corners);
        let tol = EPS * scale * scale;
        if self.signed_area() <= tol {
            return false;
        }
        let c = &self.corners;
        for i in 0..4 {
            let prev = c[(i + 3) % 4];
            let next = c[(i + 1) % 4];
            let cross = (next - c[i]).cross(prev - c[i]);
            if cross <= tol {
                return false;
            }
        }
        self.is_simple()
    }
}

/// Decides whether `quad` can be cut off the domain bounded by `poly`.
///
/// `boundary_index[k]` names the boundary vertex that corner `k` sits on, or
/// `None` for a newly created corner. A quad is valid when it is simple,
/// counterclockwise with every interior angle in `(0°, 180°)`, each edge that
/// is not an existing boundary edge stays clear of the boundary apart from
/// its own end vertices and runs through the interior, and every new corner
/// lies strictly inside the domain.
pub fn quad_is_valid(quad: &QuadElement, poly: &PolyBoundary, boundary_index: &[Option<usize>; 4]) -> bool {
    if !quad.is_convex_ccw() {
        return false;
    }
    let n = poly.len();
    let tol = EPS * poly.scale();
    for (k, idx) in boundary_index.iter().enumerate() {
        match idx {
            Some(i) => {
                if *i >= n || poly.vertices()[*i].distance(quad.corners[k]) > tol {
                    return false;
                }
            }
            None => {
                if !poly.contains_strictly(quad.corners[k], tol) {
                    return false;
                }
            }
        }
    }
    for k in 0..4 {
        let (ia, ib) = (boundary_index[k], boundary_index[(k + 1) % 4]);
        if let (Some(a), Some(b)) = (ia, ib) {
            if (a + 1) % n == b || (b + 1) % n == a {
                continue; // existing boundary edge
            }
        }
        let (p, q) = (quad.corners[k], quad.corners[(k + 1) % 4]);
        for e in 0..n {
            let e_next = (e + 1) % n;
            let touches_end = |i: Option<usize>| i == Some(e) || i == Some(e_next);
            if touches_end(ia) || touches_end(ib) {
                continue;
            }
            if segments_intersect(p, q, poly.vertices()[e], poly.vertices()[e_next]) {
                return false;
            }
        }
        if !poly.contains_strictly(p.lerp(q, 0.5), tol) {
            return false;
        }
    }
    true
}
