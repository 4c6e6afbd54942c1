//! Background training jobs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use freemesh_core::api::{JobState, TrainRequest, TrainStatus};
use freemesh_core::checkpoint::{self, write_atomic, CheckpointManifest, RunManifest, CODE_VERSION};
use freemesh_core::meshio::BoundaryDoc;
use freemesh_core::sac::{self, SacAgent, SacConfig, SacError, TrainEvent};
use freemesh_core::{EnvConfig, PolyBoundary};

use crate::error::ApiError;

struct Job {
    status: Mutex<TrainStatus>,
    cancel: AtomicBool,
}

#[derive(Clone, Default)]
pub struct Jobs {
    jobs: Arc<Mutex<HashMap<String, Arc<Job>>>>,
    counter: Arc<AtomicU64>,
}

struct Plan {
    env: EnvConfig,
    sac: SacConfig,
    boundary: PolyBoundary,
    out_dir: PathBuf,
}

fn plan(req: TrainRequest) -> Result<Plan, ApiError> {
    let boundary = req.boundary.into_boundary().map_err(|e| ApiError::input(e.to_string()))?;
    let mut env = req.env.unwrap_or_default();
    if let Some(u) = req.upsilon {
        env.upsilon = u;
    }
    env.validate().map_err(|e| ApiError::config(e.to_string()))?;
    let mut sac = req.sac.unwrap_or_default();
    if let Some(seed) = req.seed {
        sac.seed = seed;
    }
    if let Some(steps) = req.total_steps {
        sac.total_steps = steps;
    }
    sac.validate().map_err(|e| ApiError::config(e.to_string()))?;
    freemesh_core::MeshEnv::new(env.clone())
        .and_then(|mut e| e.reset(boundary.clone()))
        .map_err(|e| ApiError::input(format!("training domain rejected: {e}")))?;
    Ok(Plan { env, sac, boundary, out_dir: req.out_dir })
}

fn io_err(path: &Path, e: std::io::Error) -> ApiError {
    ApiError::input(format!("{}: {e}", path.display()))
}

impl Jobs {
    /// Validates the request, writes the run manifest, and starts training on
    /// a blocking worker. `register` turns the final checkpoint into a model id.
    pub fn start<F>(&self, req: TrainRequest, register: F) -> Result<TrainStatus, ApiError>
    where
        F: FnOnce(&[u8]) -> Result<String, ApiError> + Send + 'static,
    {
        let p = plan(req)?;
        let ckpt_dir = p.out_dir.join("checkpoints");
        std::fs::create_dir_all(&ckpt_dir).map_err(|e| io_err(&ckpt_dir, e))?;
        let manifest = RunManifest {
            env: p.env.clone(),
            sac: p.sac.clone(),
            seed: p.sac.seed,
            code_version: CODE_VERSION.into(),
            domain: BoundaryDoc::from_boundary(&p.boundary),
            train_log: p.out_dir.join("train_log.jsonl"),
            checkpoint_dir: ckpt_dir.clone(),
            final_checkpoint: p.out_dir.join("final.ckpt"),
        };
        let manifest_path = p.out_dir.join("manifest.json");
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        write_atomic(&manifest_path, &json).map_err(|e| io_err(&manifest_path, e))?;

        let id = format!("job-{:04}", self.counter.fetch_add(1, Ordering::SeqCst) + 1);
        let status = TrainStatus {
            job_id: id.clone(),
            state: JobState::Running,
            step: 0,
            total_steps: p.sac.total_steps,
            evals: vec![],
            out_dir: p.out_dir.clone(),
            model_id: None,
            final_checkpoint: None,
            error: None,
        };
        let job = Arc::new(Job { status: Mutex::new(status.clone()), cancel: AtomicBool::new(false) });
        self.jobs.lock().expect("job lock").insert(id.clone(), job.clone());
        tracing::info!(job = %id, out_dir = %p.out_dir.display(), steps = p.sac.total_steps, "training started");
        tokio::task::spawn_blocking(move || {
            let result = run(&job, &p, &manifest).and_then(|bytes| {
                let model_id = register(&bytes).map_err(|e| SacError::Stopped(e.to_string()))?;
                Ok(model_id)
            });
            let mut st = job.status.lock().expect("status lock");
            match result {
                Ok(model_id) => {
                    st.state = JobState::Completed;
                    st.model_id = Some(model_id);
                    st.final_checkpoint = Some(manifest.final_checkpoint.clone());
                }
                Err(SacError::Stopped(_)) if job.cancel.load(Ordering::SeqCst) => st.state = JobState::Cancelled,
                Err(e) => {
                    st.state = JobState::Failed;
                    st.error = Some(e.to_string());
                }
            }
            tracing::info!(job = %st.job_id, state = ?st.state, "training finished");
        });
        Ok(status)
    }

    pub fn status(&self, id: &str) -> Result<TrainStatus, ApiError> {
        let job = self.get(id)?;
        let st = job.status.lock().expect("status lock").clone();
        Ok(st)
    }

    pub fn cancel(&self, id: &str) -> Result<TrainStatus, ApiError> {
        let job = self.get(id)?;
        job.cancel.store(true, Ordering::SeqCst);
        let st = job.status.lock().expect("status lock").clone();
        Ok(st)
    }

    fn get(&self, id: &str) -> Result<Arc<Job>, ApiError> {
        self.jobs.lock().expect("job lock").get(id).cloned().ok_or_else(|| ApiError::not_found(format!("no job {id}")))
    }
}

fn manifest_at(p: &Plan, step: u64) -> CheckpointManifest {
    CheckpointManifest { env: p.env.clone(), sac: p.sac.clone(), step, seed: p.sac.seed, code_version: CODE_VERSION.into() }
}

/// Runs training to the end and returns the final checkpoint bytes.
fn run(job: &Job, p: &Plan, manifest: &RunManifest) -> Result<Vec<u8>, SacError> {
    let mut agent = SacAgent::new(p.env.observation_len(), &p.sac)?;
    let mut log_text = String::new();
    let io = |e: std::io::Error| SacError::Stopped(format!("write failed: {e}"));
    let domains = [p.boundary.clone()];
    let log = sac::train(&p.env, &domains, &[], &mut agent, &p.sac, |ev| {
        if job.cancel.load(Ordering::SeqCst) {
            return Err(SacError::Stopped("cancelled".into()));
        }
        match ev {
            TrainEvent::Eval(rec) => {
                log_text.push_str(&serde_json::to_string(rec).expect("record serializes"));
                log_text.push('\n');
                write_atomic(&manifest.train_log, log_text.as_bytes()).map_err(io)?;
                let mut st = job.status.lock().expect("status lock");
                st.step = rec.step;
                st.evals.push(rec.clone());
            }
            TrainEvent::Checkpoint { step, agent } => {
                let path = manifest.checkpoint_dir.join(format!("step_{step:06}.ckpt"));
                write_atomic(&path, &checkpoint::encode(agent, &manifest_at(p, step))).map_err(io)?;
            }
        }
        Ok(())
    })?;
    let bytes = checkpoint::encode(&agent, &manifest_at(p, log.steps));
    write_atomic(&manifest.final_checkpoint, &bytes).map_err(io)?;
    if log_text.is_empty() {
        write_atomic(&manifest.train_log, b"").map_err(io)?;
    }
    job.status.lock().expect("status lock").step = log.steps;
    Ok(bytes)
}
