//! Typed client for the freemesh HTTP service.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use freemesh_core::api::{
    DomainRequest, ErrorBody, ErrorKind, EvalRequest, Health, MeshRequest, MeshResponse, ModelInfo, RenderRequest,
    RenderResponse, TrainRequest, TrainStatus,
};
use freemesh_core::domains::DomainSpec;
use freemesh_core::meshio::BoundaryDoc;
use freemesh_core::quality::QualityReport;

#[derive(Debug, Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{kind:?} error ({status}): {message}")]
    Api { status: u16, kind: ErrorKind, message: String },
    #[error("unexpected response ({status}): {body}")]
    Unexpected { status: u16, body: String },
    #[error(transparent)]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    pub fn kind(&self) -> Option<ErrorKind> {
        match self {
            ClientError::Api { kind, .. } => Some(*kind),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self { base: base_url.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        let body = resp.bytes().await?;
        if status.is_success() {
            return serde_json::from_slice(&body).map_err(|e| ClientError::Unexpected {
                status: status.as_u16(),
                body: format!("{e}: {}", String::from_utf8_lossy(&body)),
            });
        }
        match serde_json::from_slice::<ErrorBody>(&body) {
            Ok(err) => Err(ClientError::Api { status: status.as_u16(), kind: err.error.kind, message: err.error.message }),
            Err(_) => Err(ClientError::Unexpected { status: status.as_u16(), body: String::from_utf8_lossy(&body).into() }),
        }
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Self::decode(self.http.post(self.url(path)).json(body).send().await?).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.http.get(self.url(path)).send().await?).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/health").await
    }

    pub async fn gen_domain(&self, spec: &DomainSpec) -> Result<BoundaryDoc, ClientError> {
        self.post("/v1/domains", &DomainRequest { spec: spec.clone() }).await
    }

    pub async fn upload_model(&self, checkpoint: Vec<u8>) -> Result<ModelInfo, ClientError> {
        let req = self
            .http
            .post(self.url("/v1/models"))
            .header(reqwest::header::CONTENT_TYPE, "application/octet-stream")
            .body(checkpoint);
        Self::decode(req.send().await?).await
    }

    pub async fn model(&self, id: &str) -> Result<ModelInfo, ClientError> {
        self.get(&format!("/v1/models/{id}")).await
    }

    pub async fn mesh(&self, req: &MeshRequest) -> Result<MeshResponse, ClientError> {
        self.post("/v1/mesh", req).await
    }

    pub async fn eval(&self, mesh_text: &str) -> Result<QualityReport, ClientError> {
        self.post("/v1/eval", &EvalRequest { mesh: mesh_text.to_string() }).await
    }

    pub async fn render(&self, req: &RenderRequest) -> Result<RenderResponse, ClientError> {
        self.post("/v1/render", req).await
    }

    pub async fn start_train(&self, req: &TrainRequest) -> Result<TrainStatus, ClientError> {
        self.post("/v1/train", req).await
    }

    pub async fn train_status(&self, job_id: &str) -> Result<TrainStatus, ClientError> {
        self.get(&format!("/v1/train/{job_id}")).await
    }

    pub async fn cancel_train(&self, job_id: &str) -> Result<TrainStatus, ClientError> {
        Self::decode(self.http.delete(self.url(&format!("/v1/train/{job_id}"))).send().await?).await
    }
}
