//! Run manifests: everything needed to repeat a run, plus hashes of what it
//! produced so a replay can be compared byte for byte.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, with a generated seed made explicit.
    pub args: Vec<String>,
    pub spec: String,
    pub spec_sha256: String,
    pub seed: Option<u64>,
    pub started_unix: u64,
    pub wall_clock_ms: u64,
    pub stdout_sha256: String,
    pub outputs: Vec<OutputHash>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

pub fn unix_now() -> (SystemTime, u64) {
    let now = SystemTime::now();
    let secs = now.duration_since(UNIX_EPOCH).unwrap_or(Duration::ZERO).as_secs();
    (now, secs)
}

/// `<out>.manifest.json`.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Where a replay writes an output instead of overwriting the original.
pub fn replay_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".replay");
    PathBuf::from(s)
}
