//! HTTP/JSON front end for the mesher.
//!
//! | method | path                | body                 | reply          |
//! |--------|---------------------|----------------------|----------------|
//! | GET    | `/health`           |                      | `Health`       |
//! | POST   | `/v1/domains`       | `DomainRequest`      | `BoundaryDoc`  |
//! | POST   | `/v1/models`        | checkpoint bytes     | `ModelInfo`    |
//! | GET    | `/v1/models/{id}`   |                      | `ModelInfo`    |
//! | POST   | `/v1/mesh`          | `MeshRequest`        | `MeshResponse` |
//! | POST   | `/v1/eval`          | `EvalRequest`        | `QualityReport`|
//! | POST   | `/v1/render`        | `RenderRequest`      | `RenderResponse`|
//! | POST   | `/v1/train`         | `TrainRequest`       | `TrainStatus`  |
//! | GET    | `/v1/train/{id}`    |                      | `TrainStatus`  |
//! | DELETE | `/v1/train/{id}`    |                      | `TrainStatus`  |

mod error;
mod jobs;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;

use freemesh_core::api::{
    DomainRequest, EvalRequest, Health, MeshRequest, MeshResponse, ModelInfo, RenderRequest, RenderResponse,
    TrainRequest, TrainStatus,
};
use freemesh_core::checkpoint::{self, CheckpointManifest};
use freemesh_core::meshio::{self, BoundaryDoc};
use freemesh_core::quality::{self, QualityReport};
use freemesh_core::sac::SacAgent;
use freemesh_core::{mesher, svg};

pub use error::{ApiError, ApiJson};
use jobs::Jobs;

pub struct Model {
    pub manifest: CheckpointManifest,
    pub agent: SacAgent,
}

#[derive(Clone, Default)]
pub struct AppState {
    models: Arc<RwLock<HashMap<String, Arc<Model>>>>,
    jobs: Jobs,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a checkpoint and returns its content hash as the model id.
    pub fn register_checkpoint(&self, bytes: &[u8]) -> Result<ModelInfo, ApiError> {
        let (manifest, agent) = checkpoint::decode(bytes).map_err(|e| ApiError::input(e.to_string()))?;
        let id = hex::encode(Sha256::digest(bytes));
        let info = model_info(&id, &manifest);
        self.models.write().expect("model lock").insert(id, Arc::new(Model { manifest, agent }));
        Ok(info)
    }

    fn model(&self, id: &str) -> Result<Arc<Model>, ApiError> {
        self.models
            .read()
            .expect("model lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no model {id}")))
    }
}

fn model_info(id: &str, m: &CheckpointManifest) -> ModelInfo {
    ModelInfo { model_id: id.to_string(), step: m.step, seed: m.seed, env: m.env.clone(), sac: m.sac.clone() }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/domains", post(gen_domain))
        .route("/v1/models", post(upload_model))
        .route("/v1/models/{id}", get(get_model))
        .route("/v1/mesh", post(mesh))
        .route("/v1/eval", post(eval))
        .route("/v1/render", post(render))
        .route("/v1/train", post(start_train))
        .route("/v1/train/{id}", get(train_status).delete(cancel_train))
        .layer(DefaultBodyLimit::max(256 * 1024 * 1024))
        .with_state(state)
}

/// Serves on an already bound listener until the future is dropped.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Binds `addr` and returns the bound address plus the serving task.
pub async fn spawn(addr: SocketAddr) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let task = tokio::spawn(serve(listener, AppState::new()));
    Ok((local, task))
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

async fn gen_domain(ApiJson(req): ApiJson<DomainRequest>) -> Result<Json<BoundaryDoc>, ApiError> {
    let b = req.spec.generate().map_err(|e| ApiError::config(e.to_string()))?;
    Ok(Json(BoundaryDoc::from_boundary(&b)))
}

async fn upload_model(State(state): State<AppState>, body: Bytes) -> Result<Json<ModelInfo>, ApiError> {
    let info = tokio::task::spawn_blocking(move || state.register_checkpoint(&body)).await??;
    Ok(Json(info))
}

async fn get_model(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<ModelInfo>, ApiError> {
    let m = state.model(&id)?;
    Ok(Json(model_info(&id, &m.manifest)))
}

async fn mesh(State(state): State<AppState>, ApiJson(req): ApiJson<MeshRequest>) -> Result<Json<MeshResponse>, ApiError> {
    let model = state.model(&req.model_id)?;
    let boundary = req.boundary.into_boundary().map_err(|e| ApiError::input(e.to_string()))?;
    let mut env_cfg = model.manifest.env.clone();
    if let Some(u) = req.upsilon {
        env_cfg.upsilon = u;
    }
    env_cfg.validate().map_err(|e| ApiError::config(e.to_string()))?;
    let want_svg = req.svg;
    let resp = tokio::task::spawn_blocking(move || -> Result<MeshResponse, ApiError> {
        let run = mesher::mesh_with_policy(&model.agent, &env_cfg, &boundary).map_err(ApiError::from_sac)?;
        let svg = want_svg.then(|| svg::render_svg(Some(boundary.vertices()), Some(&run.mesh)));
        Ok(MeshResponse {
            completed: run.completed,
            mesh: meshio::write_mesh_text(&run.mesh),
            quads: run.mesh.quads.len(),
            triangles: run.mesh.triangles.len(),
            steps: run.steps,
            invalid_steps: run.invalid_steps,
            episode_return: run.episode_return,
            rule_counts: run.rule_counts,
            remaining_vertices: run.remaining_vertices,
            seconds: run.seconds,
            svg,
        })
    })
    .await??;
    Ok(Json(resp))
}

async fn eval(ApiJson(req): ApiJson<EvalRequest>) -> Result<Json<QualityReport>, ApiError> {
    let mesh = meshio::parse_mesh_text(&req.mesh).map_err(|e| ApiError::input(e.to_string()))?;
    mesh.validate().map_err(|e| ApiError::input(e.to_string()))?;
    let report = quality::report(&mesh).map_err(|e| ApiError::input(e.to_string()))?;
    Ok(Json(report))
}

async fn render(ApiJson(req): ApiJson<RenderRequest>) -> Result<Json<RenderResponse>, ApiError> {
    let boundary = match req.boundary {
        Some(doc) => Some(doc.into_boundary().map_err(|e| ApiError::input(e.to_string()))?),
        None => None,
    };
    let mesh = match req.mesh {
        Some(text) => Some(meshio::parse_mesh_text(&text).map_err(|e| ApiError::input(e.to_string()))?),
        None => None,
    };
    if boundary.is_none() && mesh.is_none() {
        return Err(ApiError::input("render needs a boundary or a mesh"));
    }
    let svg = svg::render_svg(boundary.as_ref().map(|b| b.vertices()), mesh.as_ref());
    Ok(Json(RenderResponse { svg }))
}

async fn start_train(State(state): State<AppState>, ApiJson(req): ApiJson<TrainRequest>) -> Result<Json<TrainStatus>, ApiError> {
    let registry = state.clone();
    let status = state.jobs.start(req, move |bytes| registry.register_checkpoint(bytes).map(|i| i.model_id))?;
    Ok(Json(status))
}

async fn train_status(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<TrainStatus>, ApiError> {
    Ok(Json(state.jobs.status(&id)?))
}

async fn cancel_train(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<TrainStatus>, ApiError> {
    Ok(Json(state.jobs.cancel(&id)?))
}
