//! Deterministic SVG rendering of boundaries and meshes.

use std::fmt::Write as _;

use crate::geom2d::Point2;
use crate::quality::Mesh;

const SIZE: f64 = 800.0;
const MARGIN: f64 = 20.0;

struct Fit {
    min: Point2,
    max_y: f64,
    scale: f64,
}

impl Fit {
    fn new<'a>(points: impl Iterator<Item = &'a Point2>) -> Self {
        let (mut lo, mut hi) = (Point2::new(f64::INFINITY, f64::INFINITY), Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in points {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.x.is_finite() {
            return Fit { min: Point2::new(0.0, 0.0), max_y: 1.0, scale: 1.0 };
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-12);
        Fit { min: lo, max_y: hi.y, scale: (SIZE - 2.0 * MARGIN) / span }
    }

    /// Screen coordinates with y pointing down.
    fn map(&self, p: Point2) -> (f64, f64) {
        (MARGIN + (p.x - self.min.x) * self.scale, MARGIN + (self.max_y - p.y) * self.scale)
    }
}

fn face_path(out: &mut String, fit: &Fit, pts: &[Point2], class: &str, fill: &str) {
    out.push_str("  <path class=\"");
    out.push_str(class);
    out.push_str("\" d=\"");
    for (k, p) in pts.iter().enumerate() {
        let (x, y) = fit.map(*p);
        let _ = write!(out, "{}{:.3} {:.3} ", if k == 0 { "M" } else { "L" }, x, y);
    }
    let _ = writeln!(out, "Z\" fill=\"{fill}\" stroke=\"#1f3a5f\" stroke-width=\"1\"/>");
}

/// Renders an optional mesh and an optional boundary loop. Quads become one
/// filled `<path>` each; the boundary is a closed `<polyline>`.
pub fn render_svg(boundary: Option<&[Point2]>, mesh: Option<&Mesh>) -> String {
    let pts = boundary.into_iter().flatten().chain(mesh.into_iter().flat_map(|m| m.vertices.iter()));
    let fit = Fit::new(pts);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
    );
    let _ = writeln!(out, "  <rect width=\"{SIZE}\" height=\"{SIZE}\" fill=\"#ffffff\"/>");
    if let Some(m) = mesh {
        for q in &m.quads {
            let corners: Vec<Point2> = q.iter().map(|&i| m.vertices[i]).collect();
            face_path(&mut out, &fit, &corners, "quad", "#cfe3f7");
        }
        for t in &m.triangles {
            let corners: Vec<Point2> = t.iter().map(|&i| m.vertices[i]).collect();
            face_path(&mut out, &fit, &corners, "tri", "#f7d9cf");
        }
    }
    if let Some(b) = boundary.filter(|b| !b.is_empty()) {
        out.push_str("  <polyline points=\"");
        for (k, p) in b.iter().chain(std::iter::once(&b[0])).enumerate() {
            let (x, y) = fit.map(*p);
            let _ = write!(out, "{}{:.3},{:.3}", if k == 0 { "" } else { " " }, x, y);
        }
        out.push_str("\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\"/>\n");
    }
    out.push_str("</svg>\n");
    out
}
