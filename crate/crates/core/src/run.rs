//! On-disk layout of a training run.
//!
//! ```text
//! <run>/manifest.json      configuration, schema hash, seed, timing, final metrics
//! <run>/trajectory.csv     one row per evaluation point
//! <run>/trajectory.json    the same points plus checkpoint references
//! <run>/features.json      feature specs and the values used for matrices
//! <run>/checkpoints/       binary parameter snapshots
//! <run>/confusion/         written by analysis
//! <run>/importance/
//! <run>/infoplane/
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{matrix_values, MAX_MATRIX_VALUES};
use crate::data::{DatasetTable, FeatureSpec, FeatureValue, Schema};
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::model::{Checkpoint, ModelConfig};
use crate::training::{Evaluation, TrainConfig, Trajectory};

pub const MANIFEST_VERSION: u32 = 1;

/// Training and architecture settings as read from a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub training: TrainConfig,
    pub model: ModelConfig,
}

impl RunConfig {
    /// Parses JSON, naming the offending field on failure.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Config(format!("config {}: {}", e.path(), e.inner())))?;
        cfg.training.validate()?;
        if cfg.model.embedding_dim == 0 {
            return Err(Error::Config("config model.embedding_dim: must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Given,
    Drawn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub step: u64,
    pub beta: f64,
    pub validation: Evaluation,
    pub test: Evaluation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub data: Option<String>,
    pub schema_hash: String,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub config: RunConfig,
    pub schema: Schema,
    pub rows: usize,
    pub rejected_rows: usize,
    pub split_sizes: [usize; 3],
    pub wall_clock_seconds: f64,
    pub final_metrics: Option<FinalMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub index: usize,
    pub spec: FeatureSpec,
    /// Values shown in confusion matrices.
    pub matrix_values: Vec<FeatureValue>,
}

impl FeatureRecord {
    pub fn from_table(table: &DatasetTable, seed: u64) -> Vec<FeatureRecord> {
        table
            .features()
            .iter()
            .enumerate()
            .map(|(i, spec)| FeatureRecord {
                index: i,
                spec: spec.clone(),
                matrix_values: matrix_values(table, i, MAX_MATRIX_VALUES, seed),
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct RunDirectory {
    root: PathBuf,
}

impl RunDirectory {
    pub const MANIFEST: &'static str = "manifest.json";
    pub const TRAJECTORY_CSV: &'static str = "trajectory.csv";
    pub const TRAJECTORY_JSON: &'static str = "trajectory.json";
    pub const FEATURES: &'static str = "features.json";

    /// Creates the directory; an existing one must be empty.
    pub fn create(root: &Path) -> Result<Self> {
        if root.exists() {
            let mut entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
            if entries.next().is_some() {
                return Err(Error::Config(format!("output directory {} is not empty", root.display())));
            }
        }
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    /// Opens an existing run; the manifest must be present.
    pub fn open(root: &Path) -> Result<Self> {
        let dir = Self { root: root.to_path_buf() };
        if !dir.path(Self::MANIFEST).is_file() {
            return Err(Error::Config(format!("{} is not a run directory (no manifest)", root.display())));
        }
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write_manifest(&self, m: &RunManifest) -> Result<()> {
        write_json(&self.path(Self::MANIFEST), m)
    }

    pub fn manifest(&self) -> Result<RunManifest> {
        read_json(&self.path(Self::MANIFEST))
    }

    pub fn write_features(&self, f: &[FeatureRecord]) -> Result<()> {
        write_json(&self.path(Self::FEATURES), &f)
    }

    pub fn features(&self) -> Result<Vec<FeatureRecord>> {
        read_json(&self.path(Self::FEATURES))
    }

    pub fn write_trajectory(&self, t: &Trajectory) -> Result<()> {
        t.write_csv(&self.path(Self::TRAJECTORY_CSV))?;
        write_json(&self.path(Self::TRAJECTORY_JSON), t)
    }

    pub fn trajectory(&self) -> Result<Trajectory> {
        read_json(&self.path(Self::TRAJECTORY_JSON))
    }

    /// Loads a checkpoint by its recorded reference and checks it belongs to
    /// this run's schema.
    pub fn checkpoint(&self, reference: &str, schema_hash: &str) -> Result<Checkpoint> {
        let c = Checkpoint::load(&self.path(reference))?;
        if c.meta.schema_hash != schema_hash {
            return Err(Error::Checkpoint(format!(
                "{reference} was trained on a different schema"
            )));
        }
        Ok(c)
    }

    /// Creates (if needed) and returns an analysis subdirectory.
    pub fn export_dir(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }
}
