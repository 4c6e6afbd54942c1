//! Shared drivers for the invariant tests and the acceptance runner.
#![allow(dead_code)]

pub mod oracles;

use rand::Rng;

use freemesh_core::domains::{convex, l_shape, multi_notch, star};
use freemesh_core::env::StepOutcome;
use freemesh_core::geom2d::{Point2, PolyBoundary};
use freemesh_core::{EnvConfig, MeshEnv};

/// A random boundary from one of the generators.
pub fn random_domain<R: Rng>(rng: &mut R) -> PolyBoundary {
    let seed = rng.random::<u64>();
    match rng.random_range(0..4) {
        0 => convex(2 * rng.random_range(3..20), rng.random_range(0.5..20.0), rng.random_range(0.0..0.4), seed),
        1 => star(rng.random_range(3..10), rng.random_range(1.0..10.0), rng.random_range(0.3..0.8), rng.random_range(0.0..0.3), seed),
        2 => multi_notch(10.0, 6.0, rng.random_range(1.0..3.0), rng.random_range(0.0..0.5), rng.random_range(0.8..1.6), seed),
        _ => l_shape(rng.random_range(2.0..6.0), 1.0, rng.random_range(0.4..1.0)),
    }
    .expect("generator parameters are in range")
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn between(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Exact-arithmetic-free segment test written independently of the library.
fn touch(a1: Point2, a2: Point2, b1: Point2, b2: Point2) -> bool {
    let (d1, d2) = (orient(b1, b2, a1), orient(b1, b2, a2));
    let (d3, d4) = (orient(a1, a2, b1), orient(a1, a2, b2));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && between(b1, b2, a1))
        || (d2 == 0.0 && between(b1, b2, a2))
        || (d3 == 0.0 && between(a1, a2, b1))
        || (d4 == 0.0 && between(a1, a2, b2))
}

/// Every pair of non-adjacent edges is disjoint and no vertex repeats.
pub fn brute_force_simple(v: &[Point2]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in i + 1..n {
            if v[i] == v[j] {
                return false;
            }
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if !adjacent && touch(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Default, Clone, Copy)]
pub struct WalkStats {
    pub steps: usize,
    pub valid: usize,
    pub completed: usize,
    pub max_area_error: f64,
    pub simplicity_checks: usize,
    pub simplicity_failures: usize,
}

/// Drives random actions through fresh random domains for `steps` steps,
/// checking area conservation on every valid step and simplicity of the
/// front with the brute-force oracle whenever it has at most 100 vertices.
pub fn random_walk<R: Rng>(rng: &mut R, steps: usize) -> WalkStats {
    let mut st = WalkStats::default();
    let mut env = MeshEnv::new(EnvConfig { max_consecutive_invalid: 20, ..EnvConfig::default() }).unwrap();
    env.reset(random_domain(rng)).unwrap();
    while st.steps < steps {
        let before = env.boundary().unwrap().area();
        let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let r = env.step(a).unwrap();
        st.steps += 1;
        match r.outcome {
            StepOutcome::Valid | StepOutcome::Completed => {
                st.valid += 1;
                let mut removed = r.element.expect("valid step carries its element").area();
                if let Some(c) = r.closing_element {
                    removed += c.area();
                }
                let after = if r.outcome == StepOutcome::Completed { 0.0 } else { env.boundary().unwrap().area() };
                st.max_area_error = st.max_area_error.max((before - removed - after).abs() / before);
                if r.outcome == StepOutcome::Completed {
                    st.completed += 1;
                } else {
                    let v = env.boundary().unwrap().vertices();
                    if v.len() <= 100 {
                        st.simplicity_checks += 1;
                        if !brute_force_simple(v) {
                            st.simplicity_failures += 1;
                        }
                    }
                }
            }
            _ => {}
        }
        if r.done {
            env.reset(random_domain(rng)).unwrap();
        }
    }
    st
}

/// Applies rotation `theta`, uniform scale `s` and translation `t`.
pub fn similar(b: &PolyBoundary, theta: f64, s: f64, t: Point2) -> PolyBoundary {
    let (sin, cos) = theta.sin_cos();
    let pts = b
        .vertices()
        .iter()
        .map(|p| Point2::new(s * (cos * p.x - sin * p.y) + t.x, s * (sin * p.x + cos * p.y) + t.y))
        .collect();
    PolyBoundary::new(pts).unwrap()
}

/// Largest observation and reward differences between a domain and a
/// similar copy over a shared random action sequence, or `None` if the
/// episodes took different branches.
pub fn similarity_gap<R: Rng>(rng: &mut R, steps: usize) -> Option<(f64, f64)> {
    let b = random_domain(rng);
    let theta = rng.random_range(-3.2..3.2);
    let s = 10f64.powf(rng.random_range(-1.5..1.5));
    let t = Point2::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
    let cfg = EnvConfig::default();
    let (mut e1, mut e2) = (MeshEnv::new(cfg.clone()).unwrap(), MeshEnv::new(cfg).unwrap());
    let o1 = e1.reset(b.clone()).unwrap();
    let o2 = e2.reset(similar(&b, theta, s, t)).unwrap();
    let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut worst = gap(o1.as_slice(), o2.as_slice());
    let mut reward = 0.0f64;
    for _ in 0..steps {
        let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        let (r1, r2) = (e1.step(a).unwrap(), e2.step(a).unwrap());
        if r1.outcome != r2.outcome {
            return None;
        }
        worst = worst.max(gap(r1.observation.as_slice(), r2.observation.as_slice()));
        reward = reward.max((r1.reward - r2.reward).abs());
        if r1.done {
            break;
        }
    }
    Some((worst, reward))
}
