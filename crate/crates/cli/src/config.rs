//! Run configuration: flags first, then the optional TOML file on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use xctrl::bootstrap::{BootstrapConfig, ScoreMode};
use xctrl::gmm::EmConfig;
use xctrl::ingest::{CountGroup, CountGrouping, IngestOptions};
use xctrl::intent::{OverallWeighting, StrikeZone};
use xctrl::shrinkage::ShrinkageConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required; there is no clock-based default.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub inputs: Vec<PathBuf>,
    pub ingest: IngestOptions,
    pub count_grouping: CountGrouping,
    pub em: EmConfig,
    pub bootstrap: BootstrapSettings,
    /// Fit missing models during `score` instead of failing.
    pub fit_inline: bool,
    pub per_pitch: bool,
    pub overall_weighting: OverallWeighting,
    pub zone: StrikeZone,
    pub heatmap: HeatmapSettings,
    pub shrink: ShrinkSettings,
    pub sim: SimSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out_dir: PathBuf::from("out"),
            inputs: Vec::new(),
            ingest: IngestOptions::default(),
            count_grouping: CountGrouping::default(),
            em: EmConfig::default(),
            bootstrap: BootstrapSettings::default(),
            fit_inline: false,
            per_pitch: false,
            overall_weighting: OverallWeighting::default(),
            zone: StrikeZone::default(),
            heatmap: HeatmapSettings::default(),
            shrink: ShrinkSettings::default(),
            sim: SimSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSettings {
    pub enabled: bool,
    pub replicates: usize,
    pub mode: ScoreMode,
    pub max_retries: usize,
    pub min_successful: usize,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        let d = BootstrapConfig::default();
        BootstrapSettings {
            enabled: true,
            replicates: d.replicates,
            mode: d.mode,
            max_retries: d.max_retries,
            min_successful: d.min_successful,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapSettings {
    pub bin: Option<String>,
    /// Cells per axis.
    pub resolution: usize,
    pub x_range: (f64, f64),
    pub z_range: (f64, f64),
}

impl Default for HeatmapSettings {
    fn default() -> Self {
        HeatmapSettings {
            bin: None,
            resolution: 100,
            x_range: (-24.0, 24.0),
            z_range: (0.0, 60.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShrinkSettings {
    /// Count-agnostic parent bin, `pitcher/season/pitch_type/hand`.
    pub bin: Option<String>,
    pub count_group: Option<CountGroup>,
    pub n_synthetic: usize,
    pub omega_mesh: Vec<f64>,
    pub replicates: usize,
    pub restarts: usize,
    pub split_fraction: f64,
    pub selection_folds: usize,
    pub min_real: usize,
    pub freeze_synthetic: bool,
}

impl Default for ShrinkSettings {
    fn default() -> Self {
        let d = ShrinkageConfig::default();
        ShrinkSettings {
            bin: None,
            count_group: None,
            n_synthetic: d.n_synthetic,
            omega_mesh: d.omega_mesh,
            replicates: d.replicates,
            restarts: d.restarts,
            split_fraction: d.split_fraction,
            selection_folds: d.selection_folds,
            min_real: d.min_real,
            freeze_synthetic: d.freeze_synthetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    /// Zone outcome CSV; the bundled synthetic model when absent.
    pub zones: Option<PathBuf>,
    pub sigmas: Vec<f64>,
    pub sigma_t: f64,
    pub sigma_f: Vec<f64>,
    pub innings: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            zones: None,
            sigmas: vec![1.0, 2.0, 4.0, 6.0, 8.0],
            sigma_t: 4.0,
            sigma_f: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0],
            innings: 10_000,
        }
    }
}

impl RunConfig {
    /// Overlay a TOML file: keys present in the file win over flags.
    pub fn merge_file(self, path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let file: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = toml::Table::try_from(&self).map_err(|e| CliError::Config(format!("internal: {e}")))?;
        let merged = merge(base, file);
        merged
            .try_into()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("a seed is required (--seed or `seed` in the config file)".into()))
    }

    pub fn bootstrap_config(&self) -> BootstrapConfig {
        let b = &self.bootstrap;
        BootstrapConfig {
            replicates: b.replicates,
            mode: b.mode,
            max_retries: b.max_retries,
            min_successful: b.min_successful,
            em: self.em.clone(),
        }
    }

    pub fn shrinkage_config(&self) -> ShrinkageConfig {
        let s = &self.shrink;
        ShrinkageConfig {
            n_synthetic: s.n_synthetic,
            omega_mesh: s.omega_mesh.clone(),
            replicates: s.replicates,
            restarts: s.restarts,
            split_fraction: s.split_fraction,
            selection_folds: s.selection_folds,
            min_real: s.min_real,
            freeze_synthetic: s.freeze_synthetic,
            em: self.em.clone(),
            ..ShrinkageConfig::default()
        }
    }

    /// SHA-256 of the canonical JSON form, output directory excluded so the
    /// same run into two directories hashes the same.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

fn merge(mut base: toml::Table, over: toml::Table) -> toml::Table {
    for (k, v) in over {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                base.insert(k, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
