use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Audit record written next to every artifact a command produces.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    /// Input path and its SHA-256.
    pub inputs: Vec<(PathBuf, String)>,
    pub outputs: Vec<PathBuf>,
    pub wall_time: Duration,
    /// Command-specific values, e.g. the normalization of a sampled mesh.
    pub extra: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn to_json(&self) -> Value {
        let inputs: serde_json::Map<String, Value> = self
            .inputs
            .iter()
            .map(|(p, h)| (p.display().to_string(), Value::String(h.clone())))
            .collect();
        let mut v = json!({
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": inputs,
            "outputs": self.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "wall_time_s": self.wall_time.as_secs_f64(),
        });
        for (k, x) in &self.extra {
            v[k] = x.clone();
        }
        v
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.to_json()).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

/// Where the manifest of an artifact lives: `<artifact>.manifest.json`, or
/// `manifest.json` inside an output directory.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    if artifact.is_dir() {
        artifact.join("manifest.json")
    } else {
        let mut s = artifact.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
