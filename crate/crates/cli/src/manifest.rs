//! Provenance record written next to every set of output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    /// SHA-256 of the compact JSON encoding of `config`.
    pub config_hash: String,
    pub master_seed: u64,
    pub jobs: Option<usize>,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub outputs: Vec<PathBuf>,
}

pub fn config_hash(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON values always serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, master_seed: u64, jobs: Option<usize>, started: f64) -> Result<Self, CliError> {
        let config = serde_json::to_value(config).map_err(|e| CliError::Data(e.to_string()))?;
        Ok(RunManifest {
            tool: "lqrecover".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: config_hash(&config),
            config,
            master_seed,
            jobs,
            started,
            finished: started,
            outputs: Vec::new(),
        })
    }

    pub fn write(&mut self, path: &Path) -> Result<(), CliError> {
        self.finished = now();
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Data(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    /// Whether `config` still hashes to the recorded value.
    pub fn verify(&self) -> bool {
        config_hash(&self.config) == self.config_hash
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_config() {
        let a = RunManifest::new("sweep", &serde_json::json!({"n": 4}), 1, None, 0.0).unwrap();
        let b = RunManifest::new("sweep", &serde_json::json!({"n": 5}), 1, None, 0.0).unwrap();
        assert_eq!(a.config_hash.len(), 64);
        assert_ne!(a.config_hash, b.config_hash);
        assert!(a.verify());
        let mut c = a.clone();
        c.config = serde_json::json!({"n": 6});
        assert!(!c.verify());
    }

    #[test]
    fn empty_object_digest() {
        // sha256("{}")
        assert_eq!(
            config_hash(&serde_json::json!({})),
            "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a"
        );
    }
}
