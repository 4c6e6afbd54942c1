//! The element-extraction environment.
//!
//! Each step cuts one quadrilateral off the clockwise front at the reference
//! vertex `V0`. Neighbours are named from `V0`'s point of view: the right
//! side `V_{r,j}` is `j` vertices back along the stored order and the left
//! side `V_{l,j}` is `j` vertices forward, so the domain interior is swept
//! counterclockwise from `V0→V_{r,1}` to `V0→V_{l,1}`. All local polar
//! coordinates are measured from the direction `V0→V_{r,1}`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{
    ccw_angle, find_self_intersection, point_segment_distance, polar_normalize, quad_is_valid, ray_segment_hit,
    signed_area, sweep_angle, GeomError, Point2, PolyBoundary, QuadElement, EPS,
};
use crate::quality::element_quality;

pub const REWARD_INVALID: f64 = -0.1;
pub const REWARD_COMPLETED: f64 = 10.0;
/// Raw policy output dimension: rule gate, radius fraction, angle fraction.
pub const ACTION_DIM: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("invalid boundary: {0}")]
    Boundary(#[from] GeomError),
    #[error("boundary has {0} vertices; an all-quad mesh of a single loop needs an even count")]
    OddVertexCount(usize),
    #[error("a four-vertex boundary must itself be a convex quad")]
    UnmeshableQuad,
    #[error("neighbour window n={n} needs fewer than half of the {len} boundary vertices")]
    WindowTooLarge { n: usize, len: usize },
    #[error("environment has not been reset")]
    NotReset,
    #[error("episode is over; call reset first")]
    EpisodeOver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Neighbours per side averaged when picking the reference vertex.
    pub n_rv: usize,
    /// Neighbours per side in the observation and the base length.
    pub n: usize,
    /// Fan slices probed inside the reference angle.
    pub g: usize,
    /// Action radius as a multiple of the base length.
    pub radius_alpha: f64,
    /// Probe radius as a multiple of the base length.
    pub fan_beta: f64,
    /// Divisor in the maximum-area estimate.
    pub kappa: f64,
    /// Density weight: 1.5 sparse, 1 medium, 0.5 dense.
    pub upsilon: f64,
    /// Junction angle (degrees) below which the boundary penalty kicks in.
    pub m_angle: f64,
    /// Step budget; `None` means 20 × the initial vertex count.
    pub max_steps: Option<usize>,
    pub max_consecutive_invalid: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_rv: 2,
            n: 2,
            g: 3,
            radius_alpha: 2.0,
            fan_beta: 6.0,
            kappa: 4.0,
            upsilon: 1.0,
            m_angle: 60.0,
            max_steps: None,
            max_consecutive_invalid: 50,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        if self.n_rv == 0 || self.n == 0 || self.g == 0 {
            return bad("n_rv, n and g must be at least 1");
        }
        for (name, v) in [
            ("radius_alpha", self.radius_alpha),
            ("fan_beta", self.fan_beta),
            ("kappa", self.kappa),
            ("m_angle", self.m_angle),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnvError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.upsilon > 0.0 && self.upsilon <= 10.0) {
            return Err(EnvError::Config(format!("upsilon must lie in (0, 10], got {}", self.upsilon)));
        }
        if self.max_steps == Some(0) || self.max_consecutive_invalid == 0 {
            return bad("step limits must be positive");
        }
        Ok(())
    }

    /// Length of the observation vector: `2·(2n + g) + 1`.
    pub fn observation_len(&self) -> usize {
        2 * (2 * self.n + self.g) + 1
    }
}

/// Polar neighbourhood encoding plus the remaining-area ratio as its last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn area_ratio(&self) -> f64 {
        *self.0.last().expect("observation is never empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleType {
    /// Connect `V_{l,1}` to `V_{r,2}`; no new vertex.
    Connect,
    /// One new interior vertex replaces `V0`.
    AddOne,
    /// Two new vertices offset inward from the edge `V_{r,1}V0`.
    AddTwo,
}

impl RuleType {
    pub fn index(self) -> usize {
        match self {
            RuleType::Connect => 0,
            RuleType::AddOne => 1,
            RuleType::AddTwo => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedAction {
    pub rule: RuleType,
    /// Candidate vertex in world coordinates (only meaningful for `AddOne`).
    pub vertex: Point2,
    /// Candidate distance from `V0`.
    pub radius: f64,
    /// Candidate angle from `V0→V_{r,1}`, radians.
    pub angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailReason {
    TooManyInvalid,
    StepLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepOutcome {
    Valid,
    Invalid,
    Completed,
    Failed(FailReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub element: f64,
    pub boundary: f64,
    pub density: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.element + self.boundary + self.density
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    /// Episode over (completed or failed).
    pub done: bool,
    /// Episode ended in a true terminal state; false on step-limit truncation
    /// so the learner keeps bootstrapping.
    pub terminal: bool,
    pub outcome: StepOutcome,
    /// Extracted element, present iff the outcome is `Valid` or `Completed`.
    pub element: Option<QuadElement>,
    /// The leftover four-vertex front emitted as the last element.
    pub closing_element: Option<QuadElement>,
    pub rule: Option<RuleType>,
    pub terms: Option<RewardTerms>,
}

/// Interior-side angle `∠V_{l,j} V_i V_{r,j}` in degrees.
fn window_angle(boundary: &PolyBoundary, i: usize, j: usize) -> f64 {
    let j = j as isize;
    sweep_angle(boundary.at(i, -j), boundary.vertices()[i], boundary.at(i, j)).to_degrees()
}

/// Mean of the `n_rv` window angles at vertex `i`.
pub fn averaged_angle(boundary: &PolyBoundary, i: usize, n_rv: usize) -> f64 {
    (1..=n_rv).map(|j| window_angle(boundary, i, j)).sum::<f64>() / n_rv as f64
}

/// Vertex with the smallest averaged interior window angle; ties go to the
/// lowest index.
pub fn select_reference_vertex(boundary: &PolyBoundary, n_rv: usize) -> usize {
    let mut best = 0;
    let mut best_angle = f64::INFINITY;
    for i in 0..boundary.len() {
        let a = averaged_angle(boundary, i, n_rv.max(1));
        if a < best_angle - 1e-9 {
            best = i;
            best_angle = a;
        }
    }
    best
}

/// Mean length of the `n` boundary edges on each side of the reference vertex.
pub fn base_length(boundary: &PolyBoundary, reference: usize, n: usize) -> Result<f64, EnvError> {
    let len = boundary.len();
    if n == 0 || 2 * n >= len {
        return Err(EnvError::WindowTooLarge { n, len });
    }
    let mut sum = 0.0;
    for j in 0..n as isize {
        sum += boundary.at(reference, j).distance(boundary.at(reference, j + 1));
        sum += boundary.at(reference, -j).distance(boundary.at(reference, -j - 1));
    }
    Ok(sum / (2 * n) as f64)
}

/// Largest neighbour window a boundary of `len` vertices supports.
fn effective_window(n: usize, len: usize) -> usize {
    n.min((len - 1) / 2).max(1)
}

/// Local frame at the reference vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub reference: usize,
    pub base_length: f64,
    /// Interior angle at `V0`, radians.
    pub fan: f64,
    /// World direction of `V0→V_{r,1}`, radians.
    pub heading: f64,
}

impl Frame {
    pub fn at(boundary: &PolyBoundary, reference: usize, cfg: &EnvConfig) -> Result<Frame, EnvError> {
        let n = effective_window(cfg.n, boundary.len());
        let l = base_length(boundary, reference, n)?;
        let v0 = boundary.vertices()[reference];
        let to_right = boundary.at(reference, -1) - v0;
        Ok(Frame {
            reference,
            base_length: l,
            fan: boundary.interior_angle_rad(reference)?,
            heading: to_right.y.atan2(to_right.x),
        })
    }

    pub fn select(boundary: &PolyBoundary, cfg: &EnvConfig) -> Result<Frame, EnvError> {
        Self::at(boundary, select_reference_vertex(boundary, cfg.n_rv), cfg)
    }
}

/// Probe point for fan slice `[lo, hi]` (radians from `V0→V_{r,1}`).
fn fan_probe(boundary: &PolyBoundary, frame: &Frame, lo: f64, hi: f64, reach: f64) -> Point2 {
    let i = frame.reference;
    let n = boundary.len();
    let v0 = boundary.vertices()[i];
    let to_right = boundary.at(i, -1) - v0;
    let (left, right) = (boundary.index(i as isize + 1), boundary.index(i as isize - 1));

    let mut closest: Option<(f64, Point2)> = None;
    for (k, &p) in boundary.vertices().iter().enumerate() {
        if k == i || k == left || k == right {
            continue;
        }
        let d = p.distance(v0);
        if d > reach || d <= 0.0 {
            continue;
        }
        let a = ccw_angle(to_right, p - v0);
        if a > lo + EPS && a < hi - EPS && closest.is_none_or(|(best, _)| d < best) {
            closest = Some((d, p));
        }
    }
    if let Some((_, p)) = closest {
        return p;
    }

    let mid = frame.heading + 0.5 * (lo + hi);
    let dir = Point2::new(mid.cos(), mid.sin());
    let prev_edge = boundary.index(i as isize - 1);
    let mut hit = reach;
    for e in 0..n {
        if e == i || e == prev_edge {
            continue;
        }
        if let Some(t) = ray_segment_hit(v0, dir, boundary.vertices()[e], boundary.vertices()[(e + 1) % n]) {
            if t > EPS * frame.base_length && t < hit {
                hit = t;
            }
        }
    }
    v0 + dir * hit
}

/// Builds the observation at `frame`: left neighbours `V_{l,n}..V_{l,1}`,
/// right neighbours `V_{r,1}..V_{r,n}`, one probe per fan slice, each as
/// `(distance / L, angle)`, then the remaining-area ratio.
pub fn observe_in_frame(
    boundary: &PolyBoundary,
    frame: &Frame,
    cfg: &EnvConfig,
    original_area: f64,
) -> Result<Observation, EnvError> {
    let i = frame.reference;
    let n = cfg.n as isize;
    let mut points = Vec::with_capacity(2 * cfg.n + cfg.g);
    for j in (1..=n).rev() {
        points.push(boundary.at(i, j));
    }
    for j in 1..=n {
        points.push(boundary.at(i, -j));
    }
    let reach = cfg.fan_beta * frame.base_length;
    let slice = frame.fan / cfg.g as f64;
    for k in 0..cfg.g {
        points.push(fan_probe(boundary, frame, k as f64 * slice, (k + 1) as f64 * slice, reach));
    }
    let v0 = boundary.vertices()[i];
    let polar = polar_normalize(&points, v0, boundary.at(i, -1), frame.base_length)?;
    // Cut the circle on the exterior bisector instead of at ±π so that
    // straight and reflex corners observe continuous angles.
    let mid = 0.5 * frame.fan;
    let mut out = Vec::with_capacity(cfg.observation_len());
    for (r, a) in polar {
        out.push(r);
        out.push(mid + wrap_angle(a - mid));
    }
    let ratio = if original_area > 0.0 { (boundary.area() / original_area).clamp(0.0, 1.0) } else { 1.0 };
    out.push(ratio);
    Ok(Observation(out))
}

/// Observation at reference vertex `reference`.
pub fn observe(
    boundary: &PolyBoundary,
    reference: usize,
    cfg: &EnvConfig,
    original_area: f64,
) -> Result<Observation, EnvError> {
    let frame = Frame::at(boundary, reference, cfg)?;
    observe_in_frame(boundary, &frame, cfg, original_area)
}

/// Maps a raw action in `[−1, 1]³` to a rule and a candidate vertex inside
/// the fan of radius `α·L` spanning the interior angle at `V0`.
pub fn decode_action(raw: [f64; ACTION_DIM], boundary: &PolyBoundary, frame: &Frame, cfg: &EnvConfig) -> DecodedAction {
    let raw = raw.map(|x| if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) });
    let rule = if raw[0] < 0.0 { RuleType::Connect } else { RuleType::AddOne };
    let radius = 0.5 * (raw[1] + 1.0) * cfg.radius_alpha * frame.base_length;
    let angle = 0.5 * (raw[2] + 1.0) * frame.fan;
    let v0 = boundary.vertices()[frame.reference];
    DecodedAction { rule, vertex: v0.polar_offset(radius, frame.heading + angle), radius, angle }
}

/// Boundary penalty in `[−1, 0]` from the two junction angles (degrees) and
/// the distance factor.
pub fn boundary_quality(junction_angles: (f64, f64), q_dist: f64, m_angle: f64) -> f64 {
    let worst = junction_angles.0.min(m_angle).min(junction_angles.1.min(m_angle));
    ((worst / m_angle).max(0.0) * q_dist.clamp(0.0, 1.0)).sqrt() - 1.0
}

/// `d_min / mean(d1, d2)` when the new vertex sits closer to the front than
/// its own edges are long, else 1.
pub fn distance_quality(d_min: f64, d1: f64, d2: f64) -> f64 {
    let mean = 0.5 * (d1 + d2);
    if d_min < mean {
        d_min / mean
    } else {
        1.0
    }
}

/// Density shaping term: −1 below `υ·e_min²`, a linear ramp up to
/// `υ·((e_max − e_min)/κ + e_min)²`, 0 beyond.
pub fn density_term(element_area: f64, e_min: f64, e_max: f64, kappa: f64, upsilon: f64) -> f64 {
    let a_min = upsilon * e_min * e_min;
    let a_max = upsilon * ((e_max - e_min) / kappa + e_min).powi(2);
    if element_area < a_min {
        -1.0
    } else if element_area < a_max {
        (element_area - a_min) / (a_max - a_min)
    } else {
        0.0
    }
}

/// A proposed cut: the element, the front that would remain, and the
/// bookkeeping needed to score it.
struct Extraction {
    rule: RuleType,
    element: QuadElement,
    corner_index: [Option<usize>; 4],
    remaining: Vec<Point2>,
    junctions: (usize, usize),
    /// Indices of newly created vertices in `remaining`.
    new_vertices: Vec<usize>,
}

fn extract_connect(boundary: &PolyBoundary, i: usize) -> Extraction {
    let n = boundary.len();
    let idx = |o: isize| boundary.index(i as isize + o);
    let element = QuadElement::new([boundary.at(i, 1), boundary.at(i, 0), boundary.at(i, -1), boundary.at(i, -2)]);
    let remaining: Vec<Point2> = (1..=(n as isize - 2)).map(|o| boundary.at(i, o)).collect();
    Extraction {
        rule: RuleType::Connect,
        element,
        corner_index: [Some(idx(1)), Some(idx(0)), Some(idx(-1)), Some(idx(-2))],
        junctions: (0, remaining.len() - 1),
        remaining,
        new_vertices: vec![],
    }
}

fn extract_add_one(boundary: &PolyBoundary, i: usize, vertex: Point2) -> Extraction {
    let n = boundary.len();
    let idx = |o: isize| boundary.index(i as isize + o);
    let element = QuadElement::new([boundary.at(i, 1), boundary.at(i, 0), boundary.at(i, -1), vertex]);
    let mut remaining = Vec::with_capacity(n);
    remaining.push(vertex);
    remaining.extend((1..n as isize).map(|o| boundary.at(i, o)));
    Extraction {
        rule: RuleType::AddOne,
        element,
        corner_index: [Some(idx(1)), Some(idx(0)), Some(idx(-1)), None],
        junctions: (1, n - 1),
        remaining,
        new_vertices: vec![0],
    }
}

fn extract_add_two(boundary: &PolyBoundary, i: usize, depth: f64) -> Extraction {
    let n = boundary.len();
    let idx = |o: isize| boundary.index(i as isize + o);
    let v0 = boundary.at(i, 0);
    let vr = boundary.at(i, -1);
    let d = v0 - vr;
    // Clockwise fronts keep the interior on the right of travel.
    let inward = Point2::new(d.y, -d.x) * (depth / d.norm());
    let (v3, v2) = (v0 + inward, vr + inward);
    let element = QuadElement::new([v0, vr, v2, v3]);
    let mut remaining = Vec::with_capacity(n + 2);
    remaining.push(v2);
    remaining.push(v3);
    remaining.extend((0..n as isize).map(|o| boundary.at(i, o)));
    Extraction {
        rule: RuleType::AddTwo,
        element,
        corner_index: [Some(idx(0)), Some(idx(-1)), None, None],
        junctions: (2, n + 1),
        remaining,
        new_vertices: vec![0, 1],
    }
}

/// The environment applies the two-vertex rule itself on near-circular
/// fronts: the reference averaged angle exceeds 160° and every boundary
/// angle exceeds 150°.
fn add_two_triggered(boundary: &PolyBoundary, frame: &Frame, cfg: &EnvConfig) -> bool {
    if averaged_angle(boundary, frame.reference, cfg.n_rv) <= 160.0 {
        return false;
    }
    (0..boundary.len()).all(|k| boundary.interior_angle(k).is_ok_and(|a| a > 150.0))
}

fn loop_angle(vertices: &[Point2], k: usize) -> f64 {
    let n = vertices.len();
    sweep_angle(vertices[(k + n - 1) % n], vertices[k], vertices[(k + 1) % n]).to_degrees()
}

/// Accepts an extraction when the element is a valid cut and the remaining
/// front is a simple clockwise loop that, at four vertices, is itself a
/// convex quad. Returns the closing element in that last case.
fn check_extraction(boundary: &PolyBoundary, ex: &Extraction) -> Result<Option<QuadElement>, ()> {
    if !quad_is_valid(&ex.element, boundary, &ex.corner_index) {
        return Err(());
    }
    let rem = &ex.remaining;
    let scale = boundary.scale();
    let area = signed_area(rem).map_err(|_| ())?;
    if area >= -EPS * scale * scale || find_self_intersection(rem).is_some() {
        return Err(());
    }
    let n = rem.len();
    if (0..n).any(|k| rem[k].distance(rem[(k + 1) % n]) <= EPS * scale) {
        return Err(());
    }
    if n == 4 {
        let closing = QuadElement::new([rem[3], rem[2], rem[1], rem[0]]);
        return if closing.is_convex_ccw() { Ok(Some(closing)) } else { Err(()) };
    }
    Ok(None)
}

/// `edge_range` is the shortest and longest edge of the boundary the episode
/// started from. Measuring it on the shrinking front instead would lower the
/// tolerated element size as the mesh refines and reward endless refinement.
fn score(ex: &Extraction, edge_range: (f64, f64), cfg: &EnvConfig) -> RewardTerms {
    let rem = &ex.remaining;
    let n = rem.len();
    let element = element_quality(&ex.element).unwrap_or(0.0);
    let junctions = (loop_angle(rem, ex.junctions.0), loop_angle(rem, ex.junctions.1));
    let mut q_dist: f64 = 1.0;
    for &k in &ex.new_vertices {
        let p = rem[k];
        let (prev, next) = ((k + n - 1) % n, (k + 1) % n);
        let d_min = (0..n)
            .filter(|&e| e != prev && e != k)
            .map(|e| point_segment_distance(p, rem[e], rem[(e + 1) % n]))
            .fold(f64::INFINITY, f64::min);
        let d1 = p.distance(rem[next]);
        let d2 = p.distance(rem[prev]);
        q_dist = q_dist.min(distance_quality(d_min, d1, d2));
    }
    let (e_min, e_max) = edge_range;
    RewardTerms {
        element,
        boundary: boundary_quality(junctions, q_dist, cfg.m_angle),
        density: density_term(ex.element.area(), e_min, e_max, cfg.kappa, cfg.upsilon),
    }
}

/// Per-episode state machine: `reset` with a boundary, then `step` until done.
#[derive(Debug, Clone)]
pub struct MeshEnv {
    cfg: EnvConfig,
    boundary: Option<PolyBoundary>,
    frame: Option<Frame>,
    original_area: f64,
    edge_range: (f64, f64),
    max_steps: usize,
    steps: usize,
    invalid_streak: usize,
    invalid_total: usize,
    done: bool,
    completed: bool,
    elements: Vec<QuadElement>,
    rule_counts: [usize; 3],
}

impl MeshEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            boundary: None,
            frame: None,
            original_area: 0.0,
            edge_range: (0.0, 0.0),
            max_steps: 0,
            steps: 0,
            invalid_streak: 0,
            invalid_total: 0,
            done: false,
            completed: false,
            elements: Vec::new(),
            rule_counts: [0; 3],
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn reset(&mut self, boundary: PolyBoundary) -> Result<Observation, EnvError> {
        let n = boundary.len();
        if !n.is_multiple_of(2) {
            return Err(EnvError::OddVertexCount(n));
        }
        if !boundary.is_simple() {
            return Err(EnvError::Boundary(GeomError::SelfIntersecting(0, 0)));
        }
        if n == 4 {
            let v = boundary.vertices();
            if !QuadElement::new([v[3], v[2], v[1], v[0]]).is_convex_ccw() {
                return Err(EnvError::UnmeshableQuad);
            }
        }
        let frame = Frame::select(&boundary, &self.cfg)?;
        self.original_area = boundary.area();
        self.edge_range = boundary.edge_length_range();
        self.max_steps = self.cfg.max_steps.unwrap_or(20 * n);
        self.steps = 0;
        self.invalid_streak = 0;
        self.invalid_total = 0;
        self.done = false;
        self.completed = false;
        self.elements.clear();
        self.rule_counts = [0; 3];
        let obs = observe_in_frame(&boundary, &frame, &self.cfg, self.original_area)?;
        self.boundary = Some(boundary);
        self.frame = Some(frame);
        Ok(obs)
    }

    pub fn boundary(&self) -> Option<&PolyBoundary> {
        self.boundary.as_ref()
    }

    pub fn frame(&self) -> Option<&Frame> {
        self.frame.as_ref()
    }

    /// Elements extracted so far (the full mesh once completed).
    pub fn elements(&self) -> &[QuadElement] {
        &self.elements
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn invalid_steps(&self) -> usize {
        self.invalid_total
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn is_completed(&self) -> bool {
        self.completed
    }

    /// How many extractions used each rule type.
    pub fn rule_counts(&self) -> [usize; 3] {
        self.rule_counts
    }

    pub fn current_observation(&self) -> Result<Observation, EnvError> {
        let (b, f) = self.boundary.as_ref().zip(self.frame.as_ref()).ok_or(EnvError::NotReset)?;
        observe_in_frame(b, f, &self.cfg, self.original_area)
    }

    pub fn decode(&self, raw: [f64; ACTION_DIM]) -> Result<DecodedAction, EnvError> {
        let (b, f) = self.boundary.as_ref().zip(self.frame.as_ref()).ok_or(EnvError::NotReset)?;
        Ok(decode_action(raw, b, f, &self.cfg))
    }

    pub fn step(&mut self, raw: [f64; ACTION_DIM]) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let boundary = self.boundary.take().ok_or(EnvError::NotReset)?;
        let frame = self.frame.ok_or(EnvError::NotReset)?;
        self.steps += 1;

        if boundary.len() == 4 {
            let v = boundary.vertices();
            let element = QuadElement::new([v[3], v[2], v[1], v[0]]);
            let obs = observe_in_frame(&boundary, &frame, &self.cfg, self.original_area)?;
            self.boundary = Some(boundary);
            return Ok(self.finish_completed(obs, element, None, None));
        }

        let mut attempt = None;
        if add_two_triggered(&boundary, &frame, &self.cfg) {
            let ex = extract_add_two(&boundary, frame.reference, frame.base_length);
            if let Ok(closing) = check_extraction(&boundary, &ex) {
                attempt = Some((ex, closing));
            }
        }
        if attempt.is_none() {
            let action = decode_action(raw, &boundary, &frame, &self.cfg);
            let ex = match action.rule {
                RuleType::Connect => extract_connect(&boundary, frame.reference),
                _ => extract_add_one(&boundary, frame.reference, action.vertex),
            };
            match check_extraction(&boundary, &ex) {
                Ok(closing) => attempt = Some((ex, closing)),
                Err(()) => {
                    let obs = observe_in_frame(&boundary, &frame, &self.cfg, self.original_area)?;
                    self.boundary = Some(boundary);
                    return Ok(self.finish_invalid(obs));
                }
            }
        }

        let (ex, closing) = attempt.expect("set above");
        self.rule_counts[ex.rule.index()] += 1;
        self.invalid_streak = 0;
        let next = PolyBoundary::from_trusted(ex.remaining.clone());
        let next_frame = Frame::select(&next, &self.cfg)?;
        let obs = observe_in_frame(&next, &next_frame, &self.cfg, self.original_area)?;
        let rule = Some(ex.rule);
        let result = if let Some(closing) = closing {
            self.finish_completed(obs, ex.element, Some(closing), rule)
        } else {
            let terms = score(&ex, self.edge_range, &self.cfg);
            self.elements.push(ex.element);
            let mut r = StepResult {
                observation: obs,
                reward: terms.total(),
                done: false,
                terminal: false,
                outcome: StepOutcome::Valid,
                element: Some(ex.element),
                closing_element: None,
                rule,
                terms: Some(terms),
            };
            if self.steps >= self.max_steps {
                self.fail(&mut r, FailReason::StepLimit);
            }
            r
        };
        self.boundary = Some(next);
        self.frame = Some(next_frame);
        Ok(result)
    }

    fn finish_completed(
        &mut self,
        obs: Observation,
        element: QuadElement,
        closing: Option<QuadElement>,
        rule: Option<RuleType>,
    ) -> StepResult {
        self.elements.push(element);
        if let Some(c) = closing {
            self.elements.push(c);
        }
        self.done = true;
        self.completed = true;
        StepResult {
            observation: obs,
            reward: REWARD_COMPLETED,
            done: true,
            terminal: true,
            outcome: StepOutcome::Completed,
            element: Some(element),
            closing_element: closing,
            rule,
            terms: None,
        }
    }

    fn finish_invalid(&mut self, obs: Observation) -> StepResult {
        self.invalid_streak += 1;
        self.invalid_total += 1;
        let mut r = StepResult {
            observation: obs,
            reward: REWARD_INVALID,
            done: false,
            terminal: false,
            outcome: StepOutcome::Invalid,
            element: None,
            closing_element: None,
            rule: None,
            terms: None,
        };
        if self.invalid_streak >= self.cfg.max_consecutive_invalid {
            self.fail(&mut r, FailReason::TooManyInvalid);
        } else if self.steps >= self.max_steps {
            self.fail(&mut r, FailReason::StepLimit);
        }
        r
    }

    fn fail(&mut self, r: &mut StepResult, reason: FailReason) {
        self.done = true;
        r.done = true;
        r.terminal = reason == FailReason::TooManyInvalid;
        r.outcome = StepOutcome::Failed(reason);
        r.element = None;
    }
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn regular(n: usize, r: f64) -> PolyBoundary {
        // Clockwise: walk the angle downwards.
        let pts = (0..n).map(|k| p(0.0, 0.0).polar_offset(r, -2.0 * PI * k as f64 / n as f64)).collect();
        PolyBoundary::new(pts).unwrap()
    }

    fn l_shape() -> PolyBoundary {
        PolyBoundary::new(vec![p(0., 0.), p(0., 2.), p(1., 2.), p(1., 1.), p(2., 1.), p(2., 0.)]).unwrap()
    }

    /// Direct evaluation of the averaged-angle argmin, written against raw atan2.
    fn reference_oracle(v: &[Point2], n_rv: usize) -> usize {
        let n = v.len();
        let mut best = (f64::INFINITY, 0);
        for i in 0..n {
            let mut sum = 0.0;
            for j in 1..=n_rv {
                let r = v[(i + n - j % n) % n];
                let l = v[(i + j) % n];
                let a1 = (r.y - v[i].y).atan2(r.x - v[i].x);
                let a2 = (l.y - v[i].y).atan2(l.x - v[i].x);
                let mut d = (a2 - a1).to_degrees();
                while d < 0.0 {
                    d += 360.0;
                }
                sum += d;
            }
            let avg = sum / n_rv as f64;
            if avg < best.0 - 1e-9 {
                best = (avg, i);
            }
        }
        best.1
    }

    #[test]
    fn reference_vertex_fixtures() {
        let pts = vec![p(0., 0.), p(0., 2.), p(1.5, 2.5), p(4., 0.), p(3., -1.), p(1., -1.)];
        let b = PolyBoundary::with_orientation(pts, true).unwrap();
        let expected = reference_oracle(b.vertices(), 2);
        assert_eq!(select_reference_vertex(&b, 2), expected);

        let hex = regular(6, 1.0);
        assert_eq!(select_reference_vertex(&hex, 2), 0);

        let l = l_shape();
        assert_eq!(select_reference_vertex(&l, 2), reference_oracle(l.vertices(), 2));
        assert_eq!(select_reference_vertex(&l, 1), reference_oracle(l.vertices(), 1));
    }

    #[test]
    fn single_sharp_corner_is_chosen() {
        // Kite with a 30° tip; every other corner is at least 90°.
        let tip = p(0.0, 0.0);
        let half = 15f64.to_radians();
        let a = tip.polar_offset(4.0, half);
        let c = tip.polar_offset(4.0, -half);
        let far = p(5.0, 0.0);
        let mut pts = vec![tip, a, p(4.6, 0.6), far, p(4.6, -0.6), c];
        pts.reverse();
        let b = PolyBoundary::with_orientation(pts, true).unwrap();
        let tip_idx = b.vertices().iter().position(|&q| q == tip).unwrap();
        assert!((b.interior_angle(tip_idx).unwrap() - 30.0).abs() < 1e-9);
        for k in 0..b.len() {
            if k != tip_idx {
                assert!(b.interior_angle(k).unwrap() >= 90.0);
            }
        }
        assert_eq!(select_reference_vertex(&b, 1), tip_idx);
    }

    #[test]
    fn base_length_cases() {
        // Left edges 1,2 and right edges 1,3 around vertex 0.
        let pts = vec![p(0., 0.), p(0., 1.), p(0., 3.), p(5., 3.), p(5., -4.), p(3., -4.), p(1., -3.), p(1., 0.)];
        let b = PolyBoundary::with_orientation(pts, true).unwrap();
        let i = b.vertices().iter().position(|&q| q == p(0., 0.)).unwrap();
        let n = b.len() as isize;
        let fwd = |o: isize| b.at(i, o);
        let bwd = |o: isize| b.at(i, -o);
        let lens = |f: &dyn Fn(isize) -> Point2| [f(0).distance(f(1)), f(1).distance(f(2))];
        let side_a = lens(&fwd);
        let side_b = lens(&bwd);
        let expected = (side_a.iter().sum::<f64>() + side_b.iter().sum::<f64>()) / 4.0;
        assert!((base_length(&b, i, 2).unwrap() - expected).abs() < 1e-12);
        let mut sides = [side_a, side_b];
        sides.sort_by(|x, y| x[1].partial_cmp(&y[1]).unwrap());
        assert_eq!(sides, [[1.0, 2.0], [1.0, 3.0]]);
        assert!((expected - 1.75).abs() < 1e-12);
        let single = (side_a[0] + side_b[0]) / 2.0;
        assert!((base_length(&b, i, 1).unwrap() - single).abs() < 1e-12);
        assert!(base_length(&b, i, n as usize / 2).is_err());

        let sq = regular(8, 1.0);
        let e = sq.edge_length(0);
        for k in 1..4 {
            assert!((base_length(&sq, 3, k).unwrap() - e).abs() < 1e-12);
        }
    }

    #[test]
    fn base_length_one_sided() {
        // Left edge 2, right edge 4 at the vertex (0,0).
        let pts = vec![p(0., 0.), p(0., 2.), p(4., 2.), p(4., 0.)];
        let b = PolyBoundary::new(pts).unwrap();
        assert!((base_length(&b, 0, 1).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reset_contract() {
        let mut env = MeshEnv::new(EnvConfig::default()).unwrap();
        let obs = env.reset(regular(20, 3.0)).unwrap();
        assert_eq!(obs.len(), 15);
        assert_eq!(obs.area_ratio(), 1.0);
        assert!(obs.as_slice().chunks(2).take(7).all(|c| c[0] >= 0.0));
        let odd = regular(7, 1.0);
        assert_eq!(env.reset(odd), Err(EnvError::OddVertexCount(7)));
        assert_eq!(MeshEnv::new(EnvConfig::default()).unwrap().step([0.0; 3]).unwrap_err(), EnvError::NotReset);
    }

    #[test]
    fn decode_examples() {
        let cfg = EnvConfig::default();
        let b = PolyBoundary::new(vec![p(0., 0.), p(0., 1.), p(1., 1.), p(1., 0.)]).unwrap();
        let frame = Frame::at(&b, 0, &cfg).unwrap();
        assert!((frame.fan - PI / 2.0).abs() < 1e-12);
        assert_eq!(frame.base_length, 1.0);
        let a = decode_action([-1.0, 0.3, 0.3], &b, &frame, &cfg);
        assert_eq!(a.rule, RuleType::Connect);
        let a = decode_action([1.0, 0.0, 0.0], &b, &frame, &cfg);
        assert_eq!(a.rule, RuleType::AddOne);
        assert!((a.radius - 1.0).abs() < 1e-12);
        assert!((a.angle - PI / 4.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(a.vertex.distance(p(h, h)) < 1e-12);
        // Upper corner of the box lands on the arc along V0→V_{l,1}.
        let a = decode_action([1.0, 1.0, 1.0], &b, &frame, &cfg);
        assert!(a.vertex.distance(p(0.0, 2.0)) < 1e-12);
        let clamped = decode_action([5.0, 9.0, 9.0], &b, &frame, &cfg);
        assert_eq!(clamped.vertex, a.vertex);
    }

    #[test]
    fn reward_term_fixtures() {
        assert_eq!(boundary_quality((90.0, 75.0), 1.0, 60.0), 0.0);
        assert!((boundary_quality((90.0, 30.0), 1.0, 60.0) - (0.5f64.sqrt() - 1.0)).abs() < 1e-12);
        let q = distance_quality(0.5, 1.0, 1.0);
        assert!((boundary_quality((90.0, 90.0), q, 60.0) - (0.5f64.sqrt() - 1.0)).abs() < 1e-12);
        assert_eq!(distance_quality(2.0, 1.0, 1.0), 1.0);

        assert_eq!(density_term(0.1, 0.5, 1.5, 4.0, 1.0), -1.0);
        assert!((density_term(0.4, 0.5, 1.5, 4.0, 1.0) - 0.48).abs() < 1e-12);
        assert_eq!(density_term(0.6, 0.5, 1.5, 4.0, 1.0), 0.0);
        // Uniform boundary: A_min = A_max, so the ramp never applies.
        assert_eq!(density_term(1.0, 1.0, 1.0, 4.0, 1.0), 0.0);
        assert_eq!(density_term(0.99, 1.0, 1.0, 4.0, 1.0), -1.0);
    }

    fn strip(cols: usize) -> PolyBoundary {
        // 1-high strip subdivided into unit edges, clockwise.
        let mut pts = vec![];
        for i in 0..=cols {
            pts.push(p(i as f64, 1.0));
        }
        for i in (0..=cols).rev() {
            pts.push(p(i as f64, 0.0));
        }
        pts.reverse();
        PolyBoundary::with_orientation(pts, true).unwrap()
    }

    #[test]
    fn invalid_step_keeps_boundary() {
        let mut env = MeshEnv::new(EnvConfig::default()).unwrap();
        let b = regular(12, 2.0);
        env.reset(b.clone()).unwrap();
        // Candidate at the origin vertex itself: degenerate quad.
        let r = env.step([1.0, -1.0, -1.0]).unwrap();
        assert_eq!(r.outcome, StepOutcome::Invalid);
        assert_eq!(r.reward, REWARD_INVALID);
        assert!(r.element.is_none());
        assert_eq!(env.boundary().unwrap(), &b);
    }

    #[test]
    fn self_intersecting_quad_is_invalid() {
        let mut env = MeshEnv::new(EnvConfig::default()).unwrap();
        env.reset(strip(4)).unwrap();
        let before = env.boundary().unwrap().clone();
        let f = *env.frame().unwrap();
        // Candidate placed just outside the fan on the wrong side of V_{r,1}:
        // angle near zero, close to V0, makes a folded element.
        let r = env.step([1.0, -0.9, -1.0]).unwrap();
        assert_eq!(r.reward, -0.1);
        assert_eq!(env.boundary().unwrap(), &before);
        assert_eq!(env.frame().unwrap(), &f);
    }

    #[test]
    fn strip_meshes_to_completion_with_connect() {
        let mut env = MeshEnv::new(EnvConfig::default()).unwrap();
        env.reset(strip(3)).unwrap();
        let mut last = None;
        for _ in 0..10 {
            let r = env.step([-1.0, 0.0, 0.0]).unwrap();
            let done = r.done;
            last = Some(r);
            if done {
                break;
            }
        }
        let last = last.unwrap();
        assert_eq!(last.outcome, StepOutcome::Completed);
        assert_eq!(last.reward, 10.0);
        assert!(last.closing_element.is_some());
        assert_eq!(env.elements().len(), 3);
        let total: f64 = env.elements().iter().map(|q| q.area()).sum();
        assert!((total - 3.0).abs() < 1e-12);
        assert_eq!(env.step([0.0; 3]).unwrap_err(), EnvError::EpisodeOver);
    }

    #[test]
    fn density_scale_is_fixed_at_reset() {
        // Unit edges give A_min = A_max = 1, so every smaller element scores −1
        // even after the front has grown short edges.
        let mut env = MeshEnv::new(EnvConfig { max_consecutive_invalid: 1000, ..EnvConfig::default() }).unwrap();
        env.reset(strip(8)).unwrap();
        let mut shortest = f64::INFINITY;
        let mut checked = 0;
        'sweep: for a in [-0.6, -0.3, 0.0, 0.3] {
            for b in [-0.8, -0.4, 0.0, 0.4, 0.8] {
                let r = env.step([0.5, a, b]).unwrap();
                if let (Some(t), Some(q)) = (r.terms, r.element) {
                    assert_eq!(t.density, if q.area() < 1.0 { -1.0 } else { 0.0 });
                    checked += 1;
                }
                if r.done {
                    break 'sweep;
                }
                shortest = shortest.min(env.boundary().unwrap().edge_length_range().0);
            }
        }
        assert!(checked >= 3 && shortest < 0.9, "{checked} steps, shortest edge {shortest}");
    }

    #[test]
    fn valid_step_reward_is_sum_of_terms() {
        let cfg = EnvConfig::default();
        let mut env = MeshEnv::new(cfg.clone()).unwrap();
        let b = strip(6);
        env.reset(b.clone()).unwrap();
        let frame = *env.frame().unwrap();
        let raw = [0.5, 0.2, 0.1];
        let action = env.decode(raw).unwrap();
        let r = env.step(raw).unwrap();
        assert_eq!(r.outcome, StepOutcome::Valid);
        // Independent scoring of the same element.
        let i = frame.reference;
        let (vl, v0, vr) = (b.at(i, 1), b.at(i, 0), b.at(i, -1));
        let quad = QuadElement::new([vl, v0, vr, action.vertex]);
        let eta_e = element_quality(&quad).unwrap();
        let next = env.boundary().unwrap();
        let k = next.vertices().iter().position(|&q| q == action.vertex).unwrap();
        let s1 = next.interior_angle(next.index(k as isize + 1)).unwrap();
        let s2 = next.interior_angle(next.index(k as isize - 1)).unwrap();
        let mut d_min = f64::INFINITY;
        for e in 0..next.len() {
            let (a, c) = (next.vertices()[e], next.at(e, 1));
            if a == action.vertex || c == action.vertex {
                continue;
            }
            d_min = d_min.min(point_segment_distance(action.vertex, a, c));
        }
        let qd = distance_quality(d_min, action.vertex.distance(vr), action.vertex.distance(vl));
        let eta_b = boundary_quality((s1, s2), qd, 60.0);
        let mu = density_term(quad.area(), 1.0, 1.0, 4.0, 1.0);
        let terms = r.terms.unwrap();
        assert!((terms.element - eta_e).abs() < 1e-12);
        assert!((terms.boundary - eta_b).abs() < 1e-12);
        assert_eq!(terms.density, mu);
        assert!((r.reward - (eta_e + eta_b + mu)).abs() < 1e-12);
    }

    #[test]
    fn add_two_on_round_front() {
        let cfg = EnvConfig::default();
        let b = regular(48, 10.0);
        let frame = Frame::select(&b, &cfg).unwrap();
        assert!(add_two_triggered(&b, &frame, &cfg));
        let mut env = MeshEnv::new(cfg).unwrap();
        env.reset(b.clone()).unwrap();
        let r = env.step([-1.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.rule, Some(RuleType::AddTwo));
        assert_eq!(env.boundary().unwrap().len(), 50);
        let e = r.element.unwrap();
        assert!((b.area() - env.boundary().unwrap().area() - e.area()).abs() < 1e-9 * b.area());
    }

    #[test]
    fn probe_falls_back_to_bisector_radius() {
        // A lone right angle in a big square: nothing within reach in any slice.
        let cfg = EnvConfig { n: 1, ..EnvConfig::default() };
        let big = 100.0;
        let pts = vec![p(0., 0.), p(0., 1.), p(0., big), p(big, big), p(big, 0.), p(1., 0.)];
        let b = PolyBoundary::new(pts).unwrap();
        let obs = observe(&b, 0, &cfg, b.area()).unwrap();
        assert_eq!(obs.len(), 11);
        let probes = &obs.as_slice()[4..10];
        let slice = (PI / 2.0) / 3.0;
        for k in 0..3 {
            assert!((probes[2 * k] - 6.0).abs() < 1e-12, "{probes:?}");
            assert!((probes[2 * k + 1] - (k as f64 + 0.5) * slice).abs() < 1e-12);
        }
    }

    #[test]
    fn probe_finds_vertex_on_bisector() {
        let cfg = EnvConfig { n: 1, ..EnvConfig::default() };
        // Right angle at the origin with unit neighbours; a notch vertex sits
        // on the first slice bisector (15°) at distance 2.
        let v = p(0.0, 0.0).polar_offset(2.0, 15f64.to_radians());
        let pts = vec![p(0., 0.), p(0., 1.), p(0., 8.), p(8., 8.), p(8., 0.), p(4., 0.), v, p(1., 0.)];
        let b = PolyBoundary::new(pts).unwrap();
        let frame = Frame::at(&b, 0, &cfg).unwrap();
        assert_eq!(frame.base_length, 1.0);
        let obs = observe_in_frame(&b, &frame, &cfg, b.area()).unwrap();
        let (r, a) = (obs.as_slice()[4], obs.as_slice()[5]);
        assert!((r - 2.0).abs() < 1e-12);
        assert!((a - 15f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
    }
}
