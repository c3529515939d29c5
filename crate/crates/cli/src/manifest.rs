//! Per-stage run manifests: config snapshot, seed, and SHA-256 of every
//! input and output, so each artifact traces back to what produced it.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::Failure;

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let mut f = std::fs::File::open(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    stage: &'a str,
    tool: &'static str,
    version: &'static str,
    master_seed: u64,
    config: &'a PipelineConfig,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a BTreeMap<String, String>,
}

/// Collects hashes while a stage runs. Output keys are paths relative to the
/// output directory, so manifests do not depend on where the run lives.
pub struct Recorder {
    out_dir: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Recorder {
    pub fn new(out_dir: &Path) -> Self {
        Recorder { out_dir: out_dir.to_path_buf(), inputs: BTreeMap::new(), outputs: BTreeMap::new() }
    }

    /// Record an input under a role name (`workers`, `clean/annotations.csv`, ...).
    pub fn input(&mut self, role: &str, path: &Path) -> Result<(), Failure> {
        let h = sha256_file(path)?;
        self.inputs.insert(role.to_string(), h);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), Failure> {
        let h = sha256_file(path)?;
        let key = path.strip_prefix(&self.out_dir).unwrap_or(path).to_string_lossy().replace('\\', "/");
        self.outputs.insert(key, h);
        Ok(())
    }

    pub fn write(&self, stage: &str, config: &PipelineConfig) -> Result<PathBuf, Failure> {
        let dir = self.out_dir.join("manifests");
        std::fs::create_dir_all(&dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
        // the output location is implied by where the manifest lives
        let mut snapshot = config.clone();
        snapshot.paths.out = None;
        let m = Manifest {
            stage,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            master_seed: config.master_seed,
            config: &snapshot,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let path = dir.join(format!("{stage}.json"));
        let mut text = serde_json::to_string_pretty(&m).map_err(|e| Failure::data(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
