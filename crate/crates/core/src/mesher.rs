//! Meshing a boundary with a trained policy.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, MeshEnv};
use crate::geom2d::PolyBoundary;
use crate::quality::Mesh;
use crate::sac::{SacAgent, SacError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshRun {
    pub completed: bool,
    /// The full mesh when completed, otherwise the elements placed so far.
    pub mesh: Mesh,
    pub steps: usize,
    pub invalid_steps: usize,
    pub episode_return: f64,
    /// Extractions per rule type (connect, one new vertex, two new vertices).
    pub rule_counts: [usize; 3],
    /// Vertices left on the front when the episode stopped.
    pub remaining_vertices: usize,
    pub seconds: f64,
}

/// Runs the deterministic policy on `boundary` until completion or failure.
pub fn mesh_with_policy(agent: &SacAgent, env_cfg: &EnvConfig, boundary: &PolyBoundary) -> Result<MeshRun, SacError> {
    let start = Instant::now();
    let mut env = MeshEnv::new(env_cfg.clone())?;
    let mut obs = env.reset(boundary.clone())?;
    let mut ret = 0.0;
    loop {
        let a = agent.act_deterministic(obs.as_slice())?;
        let r = env.step(a)?;
        ret += r.reward;
        obs = r.observation;
        if r.done {
            break;
        }
    }
    Ok(MeshRun {
        completed: env.is_completed(),
        mesh: Mesh::from_quads(env.elements()),
        steps: env.steps(),
        invalid_steps: env.invalid_steps(),
        episode_return: ret,
        rule_counts: env.rule_counts(),
        remaining_vertices: if env.is_completed() { 0 } else { env.boundary().map_or(0, |b| b.len()) },
        seconds: start.elapsed().as_secs_f64(),
    })
}
