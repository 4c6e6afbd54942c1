//! Wire types shared by the HTTP service and its client.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::domains::DomainSpec;
use crate::env::EnvConfig;
use crate::meshio::BoundaryDoc;
use crate::sac::{EvalRecord, SacConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Malformed or invalid input data.
    Input,
    /// Invalid configuration values.
    Config,
    /// The policy could not finish a mesh.
    Meshing,
    NotFound,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_id: String,
    pub step: u64,
    pub seed: u64,
    pub env: EnvConfig,
    pub sac: SacConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshRequest {
    pub model_id: String,
    pub boundary: BoundaryDoc,
    /// Overrides the density weight stored with the model.
    #[serde(default)]
    pub upsilon: Option<f64>,
    #[serde(default)]
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshResponse {
    pub completed: bool,
    /// Mesh text; partial when not completed.
    pub mesh: String,
    pub quads: usize,
    pub triangles: usize,
    pub steps: usize,
    pub invalid_steps: usize,
    pub episode_return: f64,
    pub rule_counts: [usize; 3],
    pub remaining_vertices: usize,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub mesh: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRequest {
    #[serde(default)]
    pub boundary: Option<BoundaryDoc>,
    #[serde(default)]
    pub mesh: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResponse {
    pub svg: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRequest {
    pub spec: DomainSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub boundary: BoundaryDoc,
    /// Server-side directory for the manifest, log and checkpoints.
    pub out_dir: PathBuf,
    #[serde(default)]
    pub env: Option<EnvConfig>,
    #[serde(default)]
    pub sac: Option<SacConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub total_steps: Option<u64>,
    #[serde(default)]
    pub upsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Completed,
    Failed,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStatus {
    pub job_id: String,
    pub state: JobState,
    pub step: u64,
    pub total_steps: u64,
    pub evals: Vec<EvalRecord>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default)]
    pub final_checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub error: Option<String>,
}
