use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FREQUENCIES: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
pub const DEFAULT_SPLIT: [f64; 3] = [0.8, 0.1, 0.1];

/// Categorical features with more distinct values than this are fed to
/// their encoder as standardized integer codes instead of one-hot vectors.
pub const ONE_HOT_MAX_CARDINALITY: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Binary,
    Regression,
}

impl TaskKind {
    pub fn is_classification(self) -> bool {
        !matches!(self, TaskKind::Regression)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Continuous,
    /// Present in the file but not used.
    Ignore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

/// Declares how a CSV file maps onto features and a target.
///
/// Every header column must be listed in `columns` or named as `target`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub columns: Vec<ColumnSchema>,
    pub target: String,
    pub task: TaskKind,
    /// Fixes the class labels and their order; inferred from the file when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_frequencies")]
    pub positional_frequencies: Vec<f64>,
}

fn default_split() -> [f64; 3] {
    DEFAULT_SPLIT
}

fn default_frequencies() -> Vec<f64> {
    DEFAULT_FREQUENCIES.to_vec()
}

impl Schema {
    pub fn new(columns: Vec<ColumnSchema>, target: impl Into<String>, task: TaskKind) -> Self {
        Self {
            columns,
            target: target.into(),
            task,
            classes: None,
            split: DEFAULT_SPLIT,
            seed: 0,
            positional_frequencies: default_frequencies(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Config(format!("column `{}` listed twice", c.name)));
            }
        }
        if self.columns.iter().any(|c| c.name == self.target && c.kind != ColumnKind::Ignore) {
            return Err(Error::Config(format!(
                "target `{}` must not also be a feature",
                self.target
            )));
        }
        if !self.columns.iter().any(|c| c.kind != ColumnKind::Ignore) {
            return Err(Error::Config("schema declares no features".into()));
        }
        if self.split.iter().any(|f| !(*f > 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions {:?} must be positive and sum to 1",
                self.split
            )));
        }
        if self.positional_frequencies.is_empty()
            || self.positional_frequencies.iter().any(|w| !(*w > 0.0) || !w.is_finite())
        {
            return Err(Error::Config(
                "positional frequencies must be non-empty and strictly positive".into(),
            ));
        }
        Ok(())
    }

    pub fn features(&self) -> impl Iterator<Item = &ColumnSchema> {
        self.columns.iter().filter(|c| c.kind != ColumnKind::Ignore)
    }
}
