//! Output tree: atomic file writes and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::CliError;

pub const MODELS: &str = "models";
pub const SCORES: &str = "scores";
pub const GRIDS: &str = "grids";
pub const SIM: &str = "sim";
pub const MANIFEST: &str = "manifest.json";

/// Write through a temporary sibling and rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: Vec<InputRecord>,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    /// Last run of each subcommand.
    pub runs: BTreeMap<String, RunRecord>,
}

/// Collects the files a command writes under one output directory.
pub struct OutputTree {
    pub root: PathBuf,
    written: Vec<String>,
}

impl OutputTree {
    pub fn new(root: &Path) -> OutputTree {
        OutputTree {
            root: root.to_path_buf(),
            written: Vec::new(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.path(rel), bytes)?;
        self.written.push(rel.to_string());
        Ok(())
    }

    /// Record this run in `manifest.json`, keeping other commands' entries.
    pub fn finish(mut self, command: &str, seed: u64, config_sha256: String, inputs: Vec<InputRecord>) -> Result<(), CliError> {
        let path = self.path(MANIFEST);
        let mut manifest = fs::read_to_string(&path)
            .ok()
            .and_then(|s| serde_json::from_str::<Manifest>(&s).ok())
            .unwrap_or_else(|| Manifest {
                tool: "xctrl".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                core_version: xctrl::VERSION.into(),
                runs: BTreeMap::new(),
            });
        manifest.version = env!("CARGO_PKG_VERSION").into();
        manifest.core_version = xctrl::VERSION.into();
        self.written.sort();
        self.written.dedup();
        manifest.runs.insert(
            command.to_string(),
            RunRecord {
                seed,
                config_sha256,
                inputs,
                outputs: self.written,
            },
        );
        let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        json.push('\n');
        write_atomic(&path, json.as_bytes())
    }
}
