//! Boundary JSON and the plain-text mesh format.
//!
//! Mesh text, one record per line:
//!
//! ```text
//! # comment
//! v <x> <y>
//! q <i1> <i2> <i3> <i4>     one-based, counterclockwise
//! t <i1> <i2> <i3>          accepted on input only
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{signed_area, GeomError, Point2, PolyBoundary};
use crate::quality::Mesh;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("boundary JSON: {0}")]
    Json(String),
    #[error("boundary declared {declared} but its vertices run {actual}")]
    OrientationMismatch { declared: String, actual: String },
    #[error("orientation must be \"cw\" or \"ccw\", got {0:?}")]
    BadOrientation(String),
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDoc {
    pub vertices: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<String>,
}

impl BoundaryDoc {
    pub fn from_boundary(b: &PolyBoundary) -> Self {
        Self { vertices: b.vertices().iter().map(|p| [p.x, p.y]).collect(), orientation: Some("cw".into()) }
    }

    /// Validates the document. A declared orientation must match the
    /// vertices; `ccw` input is reversed, and an undeclared one is taken as is.
    pub fn into_boundary(self) -> Result<PolyBoundary, FormatError> {
        let pts: Vec<Point2> = self.vertices.iter().map(|&[x, y]| Point2::new(x, y)).collect();
        let declared = self.orientation.map(|o| o.to_ascii_lowercase());
        let Some(declared) = declared else {
            return Ok(PolyBoundary::with_orientation(pts, true)?);
        };
        if declared != "cw" && declared != "ccw" {
            return Err(FormatError::BadOrientation(declared));
        }
        let area = signed_area(&pts)?;
        let actual = if area < 0.0 { "cw" } else { "ccw" };
        if area != 0.0 && declared != actual {
            return Err(FormatError::OrientationMismatch { declared, actual: actual.into() });
        }
        Ok(PolyBoundary::with_orientation(pts, true)?)
    }
}

pub fn parse_boundary_json(text: &str) -> Result<PolyBoundary, FormatError> {
    let doc: BoundaryDoc = serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))?;
    doc.into_boundary()
}

pub fn boundary_to_json(b: &PolyBoundary) -> String {
    let mut s = serde_json::to_string_pretty(&BoundaryDoc::from_boundary(b)).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write_mesh_text(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# quad mesh: {} vertices, {} quads", mesh.vertices.len(), mesh.quads.len());
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {}", v.x, v.y);
    }
    for q in &mesh.quads {
        let _ = writeln!(out, "q {} {} {} {}", q[0] + 1, q[1] + 1, q[2] + 1, q[3] + 1);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "t {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

pub fn parse_mesh_text(text: &str) -> Result<Mesh, FormatError> {
    let mut mesh = Mesh::default();
    let mut faces: Vec<(usize, Vec<usize>)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let err = |message: String| FormatError::Line { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let tag = parts.next().expect("non-empty line");
        let fields: Vec<&str> = parts.collect();
        match tag {
            "v" => {
                if fields.len() != 2 {
                    return Err(err(format!("vertex needs 2 coordinates, got {}", fields.len())));
                }
                let c: Vec<f64> = fields
                    .iter()
                    .map(|f| f.parse::<f64>().map_err(|_| err(format!("bad coordinate {f:?}"))))
                    .collect::<Result<_, _>>()?;
                if !c.iter().all(|x| x.is_finite()) {
                    return Err(err("non-finite coordinate".into()));
                }
                mesh.vertices.push(Point2::new(c[0], c[1]));
            }
            "q" | "t" => {
                let want = if tag == "q" { 4 } else { 3 };
                if fields.len() != want {
                    return Err(err(format!("{tag} face needs {want} indices, got {}", fields.len())));
                }
                let idx: Vec<usize> = fields
                    .iter()
                    .map(|f| match f.parse::<usize>() {
                        Ok(i) if i >= 1 => Ok(i - 1),
                        _ => Err(err(format!("bad index {f:?}; indices are one-based"))),
                    })
                    .collect::<Result<_, _>>()?;
                faces.push((line, idx));
            }
            other => return Err(err(format!("unknown record {other:?}"))),
        }
    }
    for (line, idx) in faces {
        if let Some(&bad) = idx.iter().find(|&&i| i >= mesh.vertices.len()) {
            return Err(FormatError::Line {
                line,
                message: format!("index {} exceeds {} vertices", bad + 1, mesh.vertices.len()),
            });
        }
        match idx.len() {
            4 => mesh.quads.push([idx[0], idx[1], idx[2], idx[3]]),
            _ => mesh.triangles.push([idx[0], idx[1], idx[2]]),
        }
    }
    if mesh.face_count() == 0 {
        return Err(FormatError::EmptyMesh);
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_round_trip() {
        let text = "# two quads\nv 0 0\nv 1 0\nv 2 0\nv 0 1\nv 1 1\nv 2 1\nq 1 2 5 4\nq 2 3 6 5\n";
        let m = parse_mesh_text(text).unwrap();
        assert_eq!(m.quads, vec![[0, 1, 4, 3], [1, 2, 5, 4]]);
        let again = parse_mesh_text(&write_mesh_text(&m)).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn mesh_coordinates_survive_exactly() {
        let m = Mesh { vertices: vec![Point2::new(0.1, 1.0 / 3.0); 4], quads: vec![[0, 1, 2, 3]], triangles: vec![] };
        assert_eq!(parse_mesh_text(&write_mesh_text(&m)).unwrap().vertices, m.vertices);
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse_mesh_text("v 0 0\nv 1 0\nv 1 1\nq 1 2 3\n").unwrap_err();
        assert_eq!(e, FormatError::Line { line: 4, message: "q face needs 4 indices, got 3".into() });
        let e = parse_mesh_text("v 0 0\n\nv x 0\n").unwrap_err();
        assert!(matches!(e, FormatError::Line { line: 3, .. }));
        let e = parse_mesh_text("v 0 0\nv 1 0\nv 1 1\nt 1 2 9\n").unwrap_err();
        assert!(matches!(e, FormatError::Line { line: 4, .. }));
        assert!(matches!(parse_mesh_text("q 0 1 2 3"), Err(FormatError::Line { line: 1, .. })));
        assert_eq!(parse_mesh_text("# nothing\n"), Err(FormatError::EmptyMesh));
        assert_eq!(parse_mesh_text(""), Err(FormatError::EmptyMesh));
    }

    #[test]
    fn triangles_are_read() {
        let m = parse_mesh_text("v 0 0\nv 1 0\nv 1 1\nv 0 1\nt 1 2 3\nt 1 3 4\n").unwrap();
        assert_eq!(m.triangles.len(), 2);
    }

    #[test]
    fn boundary_orientation_rules() {
        let cw = r#"{"vertices": [[0,0],[0,1],[1,1],[1,0]], "orientation": "cw"}"#;
        let b = parse_boundary_json(cw).unwrap();
        assert!(b.signed_area() < 0.0);
        let ccw = r#"{"vertices": [[0,0],[1,0],[1,1],[0,1]], "orientation": "ccw"}"#;
        let b2 = parse_boundary_json(ccw).unwrap();
        assert!(b2.signed_area() < 0.0);
        let lying = r#"{"vertices": [[0,0],[1,0],[1,1],[0,1]], "orientation": "cw"}"#;
        assert!(matches!(parse_boundary_json(lying), Err(FormatError::OrientationMismatch { .. })));
        let undeclared = r#"{"vertices": [[0,0],[1,0],[1,1],[0,1]]}"#;
        assert!(parse_boundary_json(undeclared).unwrap().signed_area() < 0.0);
        assert!(matches!(parse_boundary_json("{"), Err(FormatError::Json(_))));
        let bowtie = r#"{"vertices": [[0,0],[1,1],[1,0],[0,1]]}"#;
        assert!(parse_boundary_json(bowtie).is_err());
        assert_eq!(parse_boundary_json(&boundary_to_json(&b)).unwrap(), b);
    }
}
