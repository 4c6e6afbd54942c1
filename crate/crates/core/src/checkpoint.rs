//! Checkpoint files and run manifests.
//!
//! Checkpoint layout (little-endian):
//!
//! ```text
//! "FMCK" u32 version
//! u64 manifest length, manifest JSON
//! five × (u64 length, weight stream)   policy, q1, q2, q1_target, q2_target
//! f64 log_alpha
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvConfig;
use crate::sac::{SacAgent, SacConfig, SacError};
use crate::tinynet::{Mlp, NetError};

const MAGIC: &[u8; 4] = b"FMCK";
pub const FORMAT_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Sac(#[from] SacError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub step: u64,
    pub seed: u64,
    pub code_version: String,
}

/// Written next to a training run before it starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub env: EnvConfig,
    pub sac: SacConfig,
    pub seed: u64,
    pub code_version: String,
    pub domain: crate::meshio::BoundaryDoc,
    pub train_log: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub final_checkpoint: PathBuf,
}

pub fn encode(agent: &SacAgent, manifest: &CheckpointManifest) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let json = serde_json::to_vec(manifest).expect("manifest serializes");
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for net in [&agent.policy, &agent.q1, &agent.q2, &agent.q1_target, &agent.q2_target] {
        let bytes = net.to_bytes();
        out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    out.extend_from_slice(&agent.log_alpha.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() < n {
            return Err(CheckpointError::Format("truncated".into()));
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a checkpoint into its manifest and a ready agent.
pub fn decode(bytes: &[u8]) -> Result<(CheckpointManifest, SacAgent), CheckpointError> {
    let mut r = Reader { bytes };
    if r.take(4)? != MAGIC {
        return Err(CheckpointError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Format(format!("unsupported version {version}")));
    }
    let len = r.u64()? as usize;
    let manifest: CheckpointManifest =
        serde_json::from_slice(r.take(len)?).map_err(|e| CheckpointError::Format(format!("manifest: {e}")))?;
    let mut nets = Vec::with_capacity(5);
    for _ in 0..5 {
        let len = r.u64()? as usize;
        nets.push(Mlp::from_bytes(r.take(len)?)?);
    }
    let log_alpha = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
    if !r.bytes.is_empty() {
        return Err(CheckpointError::Format(format!("{} trailing bytes", r.bytes.len())));
    }
    if nets[0].input_dim() != manifest.env.observation_len() {
        return Err(CheckpointError::Format("policy input does not match the environment config".into()));
    }
    let mut it = nets.into_iter();
    let mut next = || it.next().expect("five nets");
    let rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    let agent = SacAgent::from_nets(next(), next(), next(), next(), next(), log_alpha, &manifest.sac, rng)?;
    Ok((manifest, agent))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
