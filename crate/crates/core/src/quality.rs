//! Per-element quad metrics and whole-mesh quality reports.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::SQRT_2;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{Point2, QuadElement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QualityError {
    #[error("quad has a zero-length diagonal")]
    ZeroDiagonal,
    #[error("quad has a zero-length edge")]
    ZeroEdge,
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("face {face} references vertex {index} but the mesh has {len} vertices")]
    IndexOutOfRange { face: usize, index: usize, len: usize },
}

/// Element quality from edge and angle ratios: `sqrt(q_edge · q_angle)` with
/// `q_edge = √2·min edge / max diagonal` and `q_angle = min angle / max angle`.
/// A square scores 1.
pub fn element_quality(q: &QuadElement) -> Result<f64, QualityError> {
    let q_edge = stretch(q)?;
    let angles = q.interior_angles();
    let (lo, hi) = min_max(&angles);
    let q_angle = if hi > 0.0 { lo / hi } else { 0.0 };
    Ok((q_edge * q_angle).max(0.0).sqrt())
}

/// `√2 · min edge / max diagonal`.
pub fn stretch(q: &QuadElement) -> Result<f64, QualityError> {
    let [d0, d1] = q.diagonals();
    let d_max = d0.max(d1);
    if d_max <= 0.0 {
        return Err(QualityError::ZeroDiagonal);
    }
    let (l_min, _) = min_max(&q.edge_lengths());
    Ok(SQRT_2 * l_min / d_max)
}

/// Minimum over corners of the normalized cross product of the two corner
/// edges. Positive for convex counterclockwise quads, negative at a reflex
/// corner.
pub fn scaled_jacobian(q: &QuadElement) -> Result<f64, QualityError> {
    let c = &q.corners;
    let mut worst = f64::INFINITY;
    for i in 0..4 {
        let e_next = c[(i + 1) % 4] - c[i];
        let e_prev = c[(i + 3) % 4] - c[i];
        let denom = e_next.norm() * e_prev.norm();
        if denom == 0.0 {
            return Err(QualityError::ZeroEdge);
        }
        worst = worst.min(e_next.cross(e_prev) / denom);
    }
    Ok(worst)
}

fn triangle_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * (b - a).cross(c - a).abs()
}

/// Largest `1 − smaller/larger` over the two diagonal splits. Any
/// parallelogram scores 0; a degenerate split scores 1.
pub fn taper(q: &QuadElement) -> f64 {
    let c = &q.corners;
    let splits = [
        (triangle_area(c[0], c[1], c[2]), triangle_area(c[0], c[2], c[3])),
        (triangle_area(c[1], c[2], c[3]), triangle_area(c[1], c[3], c[0])),
    ];
    splits
        .iter()
        .map(|&(a, b)| {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if lo <= 0.0 {
                1.0
            } else {
                1.0 - lo / hi
            }
        })
        .fold(0.0, f64::max)
}

/// `(|min angle − 90°|, |max angle − 90°|)`.
pub fn angle_deviations(q: &QuadElement) -> (f64, f64) {
    let (lo, hi) = min_max(&q.interior_angles());
    ((lo - 90.0).abs(), (hi - 90.0).abs())
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Vertices plus quad and triangle faces (indices are zero-based).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Point2>,
    pub quads: Vec<[usize; 4]>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    /// Builds an indexed mesh from loose quads, merging bit-identical corners.
    pub fn from_quads(quads: &[QuadElement]) -> Self {
        let mut mesh = Mesh::default();
        let mut index: BTreeMap<(u64, u64), usize> = BTreeMap::new();
        for q in quads {
            let mut face = [0usize; 4];
            for (k, p) in q.corners.iter().enumerate() {
                let key = (p.x.to_bits(), p.y.to_bits());
                face[k] = *index.entry(key).or_insert_with(|| {
                    mesh.vertices.push(*p);
                    mesh.vertices.len() - 1
                });
            }
            mesh.quads.push(face);
        }
        mesh
    }

    pub fn face_count(&self) -> usize {
        self.quads.len() + self.triangles.len()
    }

    pub fn validate(&self) -> Result<(), QualityError> {
        let len = self.vertices.len();
        let faces = self.quads.iter().map(|q| q.as_slice()).chain(self.triangles.iter().map(|t| t.as_slice()));
        for (face, idx) in faces.enumerate() {
            if let Some(&index) = idx.iter().find(|&&i| i >= len) {
                return Err(QualityError::IndexOutOfRange { face, index, len });
            }
        }
        Ok(())
    }

    pub fn quad_element(&self, i: usize) -> QuadElement {
        let f = self.quads[i];
        QuadElement::new([self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]], self.vertices[f[3]]])
    }

    fn edges(&self) -> BTreeMap<(usize, usize), usize> {
        let mut uses = BTreeMap::new();
        let mut add = |a: usize, b: usize| {
            *uses.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        };
        for q in &self.quads {
            for k in 0..4 {
                add(q[k], q[(k + 1) % 4]);
            }
        }
        for t in &self.triangles {
            for k in 0..3 {
                add(t[k], t[(k + 1) % 3]);
            }
        }
        uses
    }

    /// Vertices on an edge used by exactly one face (outer boundary and holes).
    pub fn boundary_vertices(&self) -> BTreeSet<usize> {
        self.edges()
            .into_iter()
            .filter(|&(_, count)| count == 1)
            .flat_map(|((a, b), _)| [a, b])
            .collect()
    }

    /// Boundary edges of the mesh, as vertex index pairs.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        self.edges().into_iter().filter(|&(_, count)| count == 1).map(|(e, _)| e).collect()
    }
}

/// Interior vertices whose edge valence differs from four.
pub fn singularity_count(mesh: &Mesh) -> usize {
    let edges = mesh.edges();
    let mut valence = vec![0usize; mesh.vertices.len()];
    let mut on_boundary = vec![false; mesh.vertices.len()];
    for (&(a, b), &count) in &edges {
        valence[a] += 1;
        valence[b] += 1;
        if count == 1 {
            on_boundary[a] = true;
            on_boundary[b] = true;
        }
    }
    (0..mesh.vertices.len()).filter(|&v| valence[v] > 0 && !on_boundary[v] && valence[v] != 4).count()
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Stat { mean: 0.0, std: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub quad_count: usize,
    pub singularity: usize,
    pub element_quality: Stat,
    pub min_angle_dev: Stat,
    pub max_angle_dev: Stat,
    pub scaled_jacobian: Stat,
    pub stretch: Stat,
    pub taper: Stat,
    pub triangle_count: usize,
}

/// Aggregates every per-element metric over the quads of `mesh`.
pub fn report(mesh: &Mesh) -> Result<QualityReport, QualityError> {
    if mesh.face_count() == 0 {
        return Err(QualityError::EmptyMesh);
    }
    mesh.validate()?;
    let n = mesh.quads.len();
    let mut eq = Vec::with_capacity(n);
    let mut min_dev = Vec::with_capacity(n);
    let mut max_dev = Vec::with_capacity(n);
    let mut sj = Vec::with_capacity(n);
    let mut st = Vec::with_capacity(n);
    let mut tp = Vec::with_capacity(n);
    for i in 0..n {
        let q = mesh.quad_element(i);
        eq.push(element_quality(&q)?);
        let (lo, hi) = angle_deviations(&q);
        min_dev.push(lo);
        max_dev.push(hi);
        sj.push(scaled_jacobian(&q)?);
        st.push(stretch(&q)?);
        tp.push(taper(&q));
    }
    Ok(QualityReport {
        quad_count: n,
        singularity: singularity_count(mesh),
        element_quality: Stat::of(&eq),
        min_angle_dev: Stat::of(&min_dev),
        max_angle_dev: Stat::of(&max_dev),
        scaled_jacobian: Stat::of(&sj),
        stretch: Stat::of(&st),
        taper: Stat::of(&tp),
        triangle_count: mesh.triangles.len(),
    })
}

impl QualityReport {
    fn rows(&self) -> Vec<(&'static str, &'static str, String, String)> {
        let stat_row = |key, label, s: Stat| (key, label, format!("{:.6}", s.mean), format!("{:.6}", s.std));
        vec![
            ("quads", "Quads", self.quad_count.to_string(), String::new()),
            ("singularity", "Singularity (L)", self.singularity.to_string(), String::new()),
            stat_row("element_quality", "Element quality (H)", self.element_quality),
            stat_row("min_angle_dev", "|MinAngle - 90| (L)", self.min_angle_dev),
            stat_row("max_angle_dev", "|MaxAngle - 90| (L)", self.max_angle_dev),
            stat_row("scaled_jacobian", "Scaled jacobian (H)", self.scaled_jacobian),
            stat_row("stretch", "Stretch (H)", self.stretch),
            stat_row("taper", "Taper (L)", self.taper),
            ("triangles", "#Triangle (L)", self.triangle_count.to_string(), String::new()),
        ]
    }

    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<22} {:>12} {:>12}\n", "Metric", "Mean", "Std");
        for (_, label, mean, std) in self.rows() {
            out.push_str(&format!("{label:<22} {mean:>12} {std:>12}\n"));
        }
        out
    }

    /// One `key=value` line per quantity; stats expand to `_mean` / `_std`.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (key, _, mean, std) in self.rows() {
            if std.is_empty() {
                out.push_str(&format!("{key}={mean}\n"));
            } else {
                out.push_str(&format!("{key}_mean={mean}\n{key}_std={std}\n"));
            }
        }
        out
    }
}
