//! Seeded boundary generators for training and test domains.
//!
//! Every generator returns a clockwise loop with an even vertex count.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom2d::{GeomError, Point2, PolyBoundary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DomainSpec {
    /// `points` spikes alternating between `radius` and `inner_ratio·radius`.
    Star {
        points: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_inner_ratio")]
        inner_ratio: f64,
        /// Relative radial noise.
        #[serde(default)]
        jitter: f64,
        #[serde(default)]
        seed: u64,
    },
    LShape {
        #[serde(default = "default_l_size")]
        size: f64,
        #[serde(default = "default_l_thickness")]
        thickness: f64,
        /// Target edge length; 0 keeps the six corners only.
        #[serde(default)]
        segment: f64,
    },
    /// Slanted box pinched by a V notch from the top and a slot from the
    /// bottom, with unevenly subdivided sides.
    MultiNotch {
        #[serde(default = "default_mn_width")]
        width: f64,
        #[serde(default = "default_mn_height")]
        height: f64,
        #[serde(default = "default_notch_depth")]
        notch_depth: f64,
        /// Segment-length variation factor in `[0, 1)`.
        #[serde(default = "default_variation")]
        variation: f64,
        #[serde(default = "default_segment")]
        segment: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Annular sector: a C shape, i.e. a ring with a bridged cut.
    RingBridged {
        #[serde(default = "default_radius_outer")]
        outer: f64,
        #[serde(default = "default_radius_inner")]
        inner: f64,
        #[serde(default = "default_sweep")]
        sweep_deg: f64,
        #[serde(default = "default_arc_segments")]
        arc_segments: usize,
    },
    /// Convex polygon with perturbed vertex angles and radii.
    Convex {
        vertices: usize,
        #[serde(default = "default_radius")]
        radius: f64,
        /// Perturbation strength in `[0, 1)`.
        #[serde(default)]
        irregularity: f64,
        #[serde(default)]
        seed: u64,
    },
    /// A user polygon in either orientation, optionally resampled to
    /// `segment`-length edges. Odd loops get one extra split.
    PolygonFile {
        vertices: Vec<[f64; 2]>,
        #[serde(default)]
        segment: f64,
        #[serde(default)]
        variation: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_radius() -> f64 {
    5.0
}
fn default_inner_ratio() -> f64 {
    0.5
}
fn default_l_size() -> f64 {
    2.0
}
fn default_l_thickness() -> f64 {
    1.0
}
fn default_mn_width() -> f64 {
    10.0
}
fn default_mn_height() -> f64 {
    6.0
}
fn default_notch_depth() -> f64 {
    2.5
}
fn default_variation() -> f64 {
    0.3
}
fn default_segment() -> f64 {
    1.0
}
fn default_radius_outer() -> f64 {
    5.0
}
fn default_radius_inner() -> f64 {
    3.0
}
fn default_sweep() -> f64 {
    270.0
}
fn default_arc_segments() -> usize {
    12
}

impl DomainSpec {
    /// The default training domain: moderate sharp angles and one bottleneck.
    pub fn training_default() -> Self {
        DomainSpec::MultiNotch {
            width: default_mn_width(),
            height: default_mn_height(),
            notch_depth: default_notch_depth(),
            variation: default_variation(),
            segment: default_segment(),
            seed: 0,
        }
    }

    pub fn generate(&self) -> Result<PolyBoundary, GeomError> {
        match *self {
            DomainSpec::PolygonFile { ref vertices, segment, variation, seed } => {
                polygon(vertices, segment, variation, seed)
            }
            DomainSpec::Star { points, radius, inner_ratio, jitter, seed } => star(points, radius, inner_ratio, jitter, seed),
            DomainSpec::LShape { size, thickness, segment } => l_shape(size, thickness, segment),
            DomainSpec::MultiNotch { width, height, notch_depth, variation, segment, seed } => {
                multi_notch(width, height, notch_depth, variation, segment, seed)
            }
            DomainSpec::RingBridged { outer, inner, sweep_deg, arc_segments } => {
                ring_bridged(outer, inner, sweep_deg, arc_segments)
            }
            DomainSpec::Convex { vertices, radius, irregularity, seed } => convex(vertices, radius, irregularity, seed),
        }
    }
}

fn bad(msg: &str) -> GeomError {
    GeomError::BadParameter(msg.to_string())
}

/// Builds a boundary from counterclockwise points.
fn from_ccw(mut pts: Vec<Point2>) -> Result<PolyBoundary, GeomError> {
    pts.reverse();
    PolyBoundary::new(pts)
}

pub fn star(points: usize, radius: f64, inner_ratio: f64, jitter: f64, seed: u64) -> Result<PolyBoundary, GeomError> {
    if points < 3 || radius.is_nan() || radius <= 0.0 || !(0.0..1.0).contains(&inner_ratio) || inner_ratio == 0.0 || !(0.0..0.5).contains(&jitter) {
        return Err(bad("star needs ≥3 points, radius > 0, inner_ratio in (0,1), jitter in [0,0.5)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * points;
    let pts = (0..n)
        .map(|k| {
            let base = if k % 2 == 0 { radius } else { radius * inner_ratio };
            let r = base * (1.0 + jitter * rng.random_range(-1.0..1.0));
            Point2::new(0.0, 0.0).polar_offset(r, 2.0 * PI * k as f64 / n as f64)
        })
        .collect();
    from_ccw(pts)
}

pub fn l_shape(size: f64, thickness: f64, segment: f64) -> Result<PolyBoundary, GeomError> {
    if !(size > 0.0 && thickness > 0.0 && thickness < size) || segment < 0.0 {
        return Err(bad("l-shape needs 0 < thickness < size"));
    }
    let corners = vec![
        Point2::new(0.0, 0.0),
        Point2::new(size, 0.0),
        Point2::new(size, thickness),
        Point2::new(thickness, thickness),
        Point2::new(thickness, size),
        Point2::new(0.0, size),
    ];
    if segment == 0.0 {
        return from_ccw(corners);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    from_ccw(subdivide(&corners, segment, 0.0, &mut rng))
}

pub fn multi_notch(
    width: f64,
    height: f64,
    notch_depth: f64,
    variation: f64,
    segment: f64,
    seed: u64,
) -> Result<PolyBoundary, GeomError> {
    if !(width >= 4.0 && height >= 2.0) || !(notch_depth > 0.0 && notch_depth < 0.6 * height) {
        return Err(bad("multi-notch needs width ≥ 4, height ≥ 2 and 0 < notch_depth < 0.6·height"));
    }
    if !(0.0..1.0).contains(&variation) || segment.is_nan() || segment <= 0.0 {
        return Err(bad("multi-notch needs variation in [0,1) and segment > 0"));
    }
    let mid = 0.5 * width;
    let slot = 0.25 * height;
    let corners = vec![
        Point2::new(0.0, 0.0),
        Point2::new(mid - 0.5, 0.0),
        Point2::new(mid - 0.5, slot),
        Point2::new(mid + 0.5, slot),
        Point2::new(mid + 0.5, 0.0),
        Point2::new(width, 0.0),
        // Slanted right side leaves an acute top-right corner.
        Point2::new(width + 0.25 * height, height),
        Point2::new(mid + 1.0, height),
        Point2::new(mid, height - notch_depth),
        Point2::new(mid - 1.0, height),
        Point2::new(0.0, height),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    from_ccw(subdivide(&corners, segment, variation, &mut rng))
}

pub fn ring_bridged(outer: f64, inner: f64, sweep_deg: f64, arc_segments: usize) -> Result<PolyBoundary, GeomError> {
    if !(inner > 0.0 && outer > inner) || !(sweep_deg > 0.0 && sweep_deg < 360.0) || arc_segments < 2 {
        return Err(bad("ring-bridged needs 0 < inner < outer, sweep in (0,360), ≥2 arc segments"));
    }
    let sweep = sweep_deg.to_radians();
    let o = Point2::new(0.0, 0.0);
    let mut pts: Vec<Point2> =
        (0..=arc_segments).map(|k| o.polar_offset(outer, sweep * k as f64 / arc_segments as f64)).collect();
    pts.extend((0..=arc_segments).rev().map(|k| o.polar_offset(inner, sweep * k as f64 / arc_segments as f64)));
    from_ccw(pts)
}

pub fn convex(vertices: usize, radius: f64, irregularity: f64, seed: u64) -> Result<PolyBoundary, GeomError> {
    if vertices < 4 || !vertices.is_multiple_of(2) || radius.is_nan() || radius <= 0.0 || !(0.0..1.0).contains(&irregularity) {
        return Err(bad("convex needs an even count ≥ 4, radius > 0, irregularity in [0,1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 2.0 * PI / vertices as f64;
    for _ in 0..1000 {
        let pts: Vec<Point2> = (0..vertices)
            .map(|k| {
                let a = step * (k as f64 + 0.4 * irregularity * rng.random_range(-1.0..1.0));
                // Radial slack shrinks with the turning angle so many-sided
                // polygons stay convex.
                let r = radius * (1.0 + 0.1 * irregularity * step * step * rng.random_range(-1.0..1.0));
                Point2::new(0.0, 0.0).polar_offset(r, a)
            })
            .collect();
        let convex = (0..vertices).all(|k| {
            let (p, q, r) = (pts[k], pts[(k + 1) % vertices], pts[(k + 2) % vertices]);
            (q - p).cross(r - q) > 0.0
        });
        if convex {
            return from_ccw(pts);
        }
    }
    Err(bad("could not draw a convex polygon; lower the irregularity"))
}

pub fn polygon(vertices: &[[f64; 2]], segment: f64, variation: f64, seed: u64) -> Result<PolyBoundary, GeomError> {
    if segment < 0.0 || !segment.is_finite() || !(0.0..1.0).contains(&variation) {
        return Err(bad("polygon needs segment ≥ 0 and variation in [0,1)"));
    }
    let pts: Vec<Point2> = vertices.iter().map(|&[x, y]| Point2::new(x, y)).collect();
    // Validates and orients clockwise before resampling.
    let b = PolyBoundary::with_orientation(pts, true)?;
    let corners = b.vertices();
    if segment == 0.0 && corners.len() % 2 == 0 {
        return Ok(b);
    }
    let target = if segment > 0.0 { segment } else { f64::INFINITY };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = subdivide(corners, target, variation, &mut rng);
    pts.reverse();
    from_ccw(pts)
}

/// Splits every edge of a closed polyline into pieces of roughly `target`
/// length whose relative sizes vary by up to `variation`. Adds one split on
/// the longest edge when needed to make the vertex count even.
fn subdivide<R: Rng>(corners: &[Point2], target: f64, variation: f64, rng: &mut R) -> Vec<Point2> {
    let n = corners.len();
    let mut counts: Vec<usize> = (0..n)
        .map(|i| ((corners[i].distance(corners[(i + 1) % n]) / target).round() as usize).max(1))
        .collect();
    if counts.iter().sum::<usize>() % 2 != 0 {
        let longest = (0..n)
            .max_by(|&a, &b| {
                let la = corners[a].distance(corners[(a + 1) % n]) / counts[a] as f64;
                let lb = corners[b].distance(corners[(b + 1) % n]) / counts[b] as f64;
                la.total_cmp(&lb)
            })
            .expect("non-empty");
        counts[longest] += 1;
    }
    let mut out = Vec::new();
    for i in 0..n {
        let (a, b) = (corners[i], corners[(i + 1) % n]);
        let weights: Vec<f64> = (0..counts[i]).map(|_| 1.0 + variation * rng.random_range(-1.0..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        out.push(a);
        for w in &weights[..weights.len() - 1] {
            acc += w;
            out.push(a.lerp(b, acc / total));
        }
    }
    out
}

/// Unseen convex 20-gons used to probe generalisation.
pub fn convex_probe_set() -> Vec<PolyBoundary> {
    (0..5).map(|seed| convex(20, 5.0, 0.3, 1000 + seed).expect("parameters are valid")).collect()
}

/// Bundled held-out domains.
pub fn test_domains() -> Vec<(String, PolyBoundary)> {
    let specs = [
        ("star-6", DomainSpec::Star { points: 6, radius: 6.0, inner_ratio: 0.6, jitter: 0.0, seed: 0 }),
        ("l-shape", DomainSpec::LShape { size: 8.0, thickness: 4.0, segment: 1.0 }),
        ("ring-bridged", DomainSpec::RingBridged { outer: 6.0, inner: 3.0, sweep_deg: 240.0, arc_segments: 10 }),
        ("convex-20", DomainSpec::Convex { vertices: 20, radius: 5.0, irregularity: 0.3, seed: 7 }),
        (
            "multi-notch-7",
            DomainSpec::MultiNotch {
                width: 12.0,
                height: 6.0,
                notch_depth: 2.0,
                variation: 0.3,
                segment: 1.0,
                seed: 7,
            },
        ),
    ];
    specs.into_iter().map(|(n, s)| (n.to_string(), s.generate().expect("bundled specs are valid"))).collect()
}
