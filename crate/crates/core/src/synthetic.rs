//! Small discrete joint distributions with exactly computable information
//! quantities, and samplers that turn them into datasets.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{ColumnKind, ColumnSchema, DatasetTable, Schema, TaskKind, DEFAULT_SPLIT};
use crate::error::{Error, Result};
use crate::math::stream_rng;

pub const MAX_ALPHABET: usize = 16;
pub const DEFAULT_SAMPLES: usize = 10_000;
const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Shannon entropy in bits; `0 log 0 = 0`.
pub fn entropy(dist: &[f64]) -> Result<f64> {
    check_distribution(dist, "distribution")?;
    Ok(entropy_unchecked(dist))
}

fn entropy_unchecked(dist: &[f64]) -> f64 {
    -dist.iter().filter(|&&p| p > 0.0).map(|&p| p * p.log2()).sum::<f64>()
}

fn check_distribution(dist: &[f64], what: &str) -> Result<()> {
    if dist.is_empty() || dist.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Contract(format!("{what} has entries outside [0, 1]")));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Contract(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alphabet {
    pub name: String,
    pub values: Vec<String>,
}

/// Joint distribution over discrete features and a discrete outcome.
///
/// Cells enumerate feature-value combinations in row-major order (the last
/// feature varies fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    features: Vec<Alphabet>,
    target: String,
    outcomes: Vec<String>,
    /// `P(x)` per cell.
    marginal: Vec<f64>,
    /// `P(y | x)` per cell.
    conditional: Vec<Vec<f64>>,
}

impl DiscreteJoint {
    pub fn new(
        features: Vec<Alphabet>,
        target: impl Into<String>,
        outcomes: Vec<String>,
        marginal: Option<Vec<f64>>,
        conditional: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Config("features: at least one feature is required".into()));
        }
        for (i, f) in features.iter().enumerate() {
            if f.values.is_empty() || f.values.len() > MAX_ALPHABET {
                return Err(Error::Config(format!(
                    "features[{i}].values: need 1 to {MAX_ALPHABET} values, got {}",
                    f.values.len()
                )));
            }
        }
        if outcomes.len() < 2 {
            return Err(Error::Config("outcomes: need at least 2 outcome labels".into()));
        }
        let cells: usize = features.iter().map(|f| f.values.len()).product();
        let marginal = marginal.unwrap_or_else(|| vec![1.0 / cells as f64; cells]);
        if marginal.len() != cells {
            return Err(Error::Config(format!("marginal: expected {cells} cells, got {}", marginal.len())));
        }
        check_distribution(&marginal, "marginal").map_err(|e| Error::Config(format!("marginal: {e}")))?;
        if conditional.len() != cells {
            return Err(Error::Config(format!(
                "conditional: expected {cells} cells, got {}",
                conditional.len()
            )));
        }
        for (c, row) in conditional.iter().enumerate() {
            if row.len() != outcomes.len() {
                return Err(Error::Config(format!(
                    "conditional[{c}]: expected {} outcome probabilities, got {}",
                    outcomes.len(),
                    row.len()
                )));
            }
            check_distribution(row, "row").map_err(|e| Error::Config(format!("conditional[{c}]: {e}")))?;
        }
        Ok(Self {
            features,
            target: target.into(),
            outcomes,
            marginal,
            conditional,
        })
    }

    /// Binary outcome `{0, 1}` with `P(Y = 1 | x)` per cell and a uniform
    /// feature marginal.
    pub fn binary(features: Vec<Alphabet>, p_positive: &[f64]) -> Result<Self> {
        let conditional = p_positive.iter().map(|&p| vec![1.0 - p, p]).collect();
        Self::new(features, "y", vec!["0".into(), "1".into()], None, conditional)
    }

    /// Two binary interventions `A` and `B` with
    /// `P(Y=1 | A, B) = [[0.9, 0.7], [0.3, 0.1]]` (rows indexed by `A`).
    /// `A` carries far more standalone information about `Y` than `B`.
    pub fn intervention_pair() -> Self {
        let alphabet = |name: &str| Alphabet {
            name: name.into(),
            values: vec!["0".into(), "1".into()],
        };
        Self::binary(vec![alphabet("A"), alphabet("B")], &[0.9, 0.7, 0.3, 0.1]).expect("valid table")
    }

    pub fn features(&self) -> &[Alphabet] {
        &self.features
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn cell_count(&self) -> usize {
        self.marginal.len()
    }

    /// Value index of every feature in `cell`.
    pub fn cell_values(&self, mut cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.features.len()];
        for (i, f) in self.features.iter().enumerate().rev() {
            out[i] = cell % f.values.len();
            cell /= f.values.len();
        }
        out
    }

    /// `P(x, y)` as `[cell][outcome]`.
    pub fn joint_table(&self) -> Vec<Vec<f64>> {
        self.marginal
            .iter()
            .zip(&self.conditional)
            .map(|(px, row)| row.iter().map(|p| px * p).collect())
            .collect()
    }

    pub fn target_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.outcomes.len()];
        for row in self.joint_table() {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    pub fn target_entropy(&self) -> f64 {
        entropy_unchecked(&self.target_marginal())
    }

    /// `H(Y | X)` in bits.
    pub fn conditional_entropy(&self) -> f64 {
        self.marginal
            .iter()
            .zip(&self.conditional)
            .map(|(px, row)| px * entropy_unchecked(row))
            .sum()
    }

    /// `I(X; Y)` in bits by the double sum `sum p(x,y) log p(x,y) / p(x)p(y)`.
    pub fn mutual_information(&self) -> f64 {
        let py = self.target_marginal();
        let mut mi = 0.0;
        for (px, row) in self.marginal.iter().zip(self.joint_table()) {
            for (pxy, p_y) in row.iter().zip(&py) {
                if *pxy > 0.0 {
                    mi += pxy * (pxy / (px * p_y)).log2();
                }
            }
        }
        mi.max(0.0)
    }

    /// `I(X_i; Y)` in bits after marginalizing out the other features.
    pub fn standalone_feature_mi(&self, i: usize) -> Result<f64> {
        let k = self
            .features
            .get(i)
            .ok_or_else(|| Error::Contract(format!("no feature {i}")))?
            .values
            .len();
        let mut pxy = vec![vec![0.0; self.outcomes.len()]; k];
        for (cell, row) in self.joint_table().into_iter().enumerate() {
            let v = self.cell_values(cell)[i];
            for (acc, p) in pxy[v].iter_mut().zip(row) {
                *acc += p;
            }
        }
        let py = self.target_marginal();
        let mut mi = 0.0;
        for row in &pxy {
            let px: f64 = row.iter().sum();
            for (p, q) in row.iter().zip(&py) {
                if *p > 0.0 {
                    mi += p * (p / (px * q)).log2();
                }
            }
        }
        Ok(mi.max(0.0))
    }

    /// Draws `(cell, outcome)` pairs.
    pub fn sample_cells(&self, n: usize, seed: u64) -> Vec<(usize, usize)> {
        let mut rng = stream_rng(seed, 0);
        let cells = WeightedIndex::new(&self.marginal).expect("normalized marginal");
        let outcome_dists: Vec<Option<WeightedIndex<f64>>> =
            self.conditional.iter().map(|row| WeightedIndex::new(row).ok()).collect();
        (0..n)
            .map(|_| {
                let c = cells.sample(&mut rng);
                let y = outcome_dists[c].as_ref().expect("normalized row").sample(&mut rng);
                (c, y)
            })
            .collect()
    }

    /// Raw CSV records (header plus one row per sample).
    pub fn sample_records(&self, n: usize, seed: u64) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header: Vec<String> = self.features.iter().map(|f| f.name.clone()).collect();
        header.push(self.target.clone());
        let rows = self
            .sample_cells(n, seed)
            .into_iter()
            .map(|(c, y)| {
                let mut r: Vec<String> = self
                    .cell_values(c)
                    .into_iter()
                    .zip(&self.features)
                    .map(|(v, f)| f.values[v].clone())
                    .collect();
                r.push(self.outcomes[y].clone());
                r
            })
            .collect();
        (header, rows)
    }

    /// Dataset schema matching [`DiscreteJoint::sample_records`].
    pub fn schema(&self, split: [f64; 3], seed: u64) -> Schema {
        let columns = self
            .features
            .iter()
            .map(|f| ColumnSchema {
                name: f.name.clone(),
                kind: ColumnKind::Categorical,
            })
            .collect();
        let task = if self.outcomes.len() == 2 { TaskKind::Binary } else { TaskKind::Classification };
        let mut schema = Schema::new(columns, self.target.clone(), task);
        schema.classes = Some(self.outcomes.clone());
        schema.split = split;
        schema.seed = seed;
        schema
    }

    /// Samples `n` rows into a dataset split with `split`. Small `n` can
    /// fail when a split part would be empty or a feature shows one value.
    pub fn sample_table(&self, n: usize, seed: u64, split: [f64; 3]) -> Result<DatasetTable> {
        let (header, rows) = self.sample_records(n, seed);
        DatasetTable::from_records(&self.schema(split, seed), &header, rows)
    }

    /// [`DiscreteJoint::sample_table`] with the default split.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DatasetTable> {
        self.sample_table(n, seed, DEFAULT_SPLIT)
    }

    pub fn truth(&self) -> TruthReport {
        TruthReport {
            target_entropy_bits: self.target_entropy(),
            conditional_entropy_bits: self.conditional_entropy(),
            mutual_information_bits: self.mutual_information(),
            standalone_mi_bits: (0..self.features.len())
                .map(|i| FeatureMi {
                    feature: self.features[i].name.clone(),
                    bits: self.standalone_feature_mi(i).expect("index in range"),
                })
                .collect(),
        }
    }

    pub fn to_spec(&self) -> JointSpec {
        JointSpec {
            features: self.features.clone(),
            target: self.target.clone(),
            outcomes: self.outcomes.clone(),
            p_positive: None,
            conditional: Some(Value::from(self.conditional.clone())),
            marginal: Some(Value::from(self.marginal.clone())),
        }
    }
}

/// Plug-in estimate of `I(X; Y)` in bits from `(cell, outcome)` samples.
pub fn plug_in_mutual_information(samples: &[(usize, usize)], cells: usize, outcomes: usize) -> f64 {
    let n = samples.len() as f64;
    let mut counts = vec![vec![0usize; outcomes]; cells];
    for &(c, y) in samples {
        counts[c][y] += 1;
    }
    let px: Vec<f64> = counts.iter().map(|r| r.iter().sum::<usize>() as f64 / n).collect();
    let py: Vec<f64> = (0..outcomes)
        .map(|y| counts.iter().map(|r| r[y]).sum::<usize>() as f64 / n)
        .collect();
    let mut mi = 0.0;
    for (c, row) in counts.iter().enumerate() {
        for (y, &k) in row.iter().enumerate() {
            if k > 0 {
                let p = k as f64 / n;
                mi += p * (p / (px[c] * py[y])).log2();
            }
        }
    }
    mi
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMi {
    pub feature: String,
    pub bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthReport {
    pub target_entropy_bits: f64,
    pub conditional_entropy_bits: f64,
    pub mutual_information_bits: f64,
    pub standalone_mi_bits: Vec<FeatureMi>,
}

/// On-disk description of a joint.
///
/// Give either `p_positive` (binary outcomes; nested or flat per cell) or
/// `conditional` (one outcome distribution per cell). `marginal` defaults to
/// uniform over cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub features: Vec<Alphabet>,
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default = "default_outcomes")]
    pub outcomes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_positive: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditional: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal: Option<Value>,
}

fn default_target() -> String {
    "y".into()
}

fn default_outcomes() -> Vec<String> {
    vec!["0".into(), "1".into()]
}

/// Flattens nested arrays of numbers depth-first, naming the first bad entry.
fn flatten_numbers(v: &Value, path: &str, out: &mut Vec<f64>) -> Result<()> {
    match v {
        Value::Number(n) => {
            out.push(n.as_f64().expect("json numbers are f64"));
            Ok(())
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                flatten_numbers(item, &format!("{path}[{i}]"), out)?;
            }
            Ok(())
        }
        other => Err(Error::Config(format!("{path}: expected a number or array, found {other}"))),
    }
}

impl JointSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Nested index of flat cell `i`, last feature fastest.
    fn cell_path(&self, mut i: usize) -> String {
        let mut idx = vec![0; self.features.len()];
        for (k, f) in self.features.iter().enumerate().rev() {
            let n = f.values.len().max(1);
            idx[k] = i % n;
            i /= n;
        }
        idx.iter().map(|v| format!("[{v}]")).collect()
    }

    pub fn build(&self) -> Result<DiscreteJoint> {
        let marginal = match &self.marginal {
            Some(v) => {
                let mut m = Vec::new();
                flatten_numbers(v, "marginal", &mut m)?;
                Some(m)
            }
            None => None,
        };
        let conditional = match (&self.p_positive, &self.conditional) {
            (Some(p), None) => {
                if self.outcomes.len() != 2 {
                    return Err(Error::Config("p_positive: requires exactly two outcomes".into()));
                }
                let mut flat = Vec::new();
                flatten_numbers(p, "p_positive", &mut flat)?;
                if let Some(i) = flat.iter().position(|p| !(0.0..=1.0).contains(p)) {
                    let path = if p.as_array().is_some_and(|a| a.iter().all(Value::is_number)) {
                        format!("[{i}]")
                    } else {
                        self.cell_path(i)
                    };
                    return Err(Error::Config(format!(
                        "p_positive{path}: {} is not a probability",
                        flat[i]
                    )));
                }
                flat.into_iter().map(|p| vec![1.0 - p, p]).collect()
            }
            (None, Some(c)) => {
                let Value::Array(rows) = c else {
                    return Err(Error::Config("conditional: expected an array of rows".into()));
                };
                let mut out = Vec::with_capacity(rows.len());
                for (i, r) in rows.iter().enumerate() {
                    let mut row = Vec::new();
                    flatten_numbers(r, &format!("conditional[{i}]"), &mut row)?;
                    out.push(row);
                }
                out
            }
            _ => {
                return Err(Error::Config(
                    "p_positive/conditional: give exactly one of the two".into(),
                ))
            }
        };
        DiscreteJoint::new(
            self.features.clone(),
            self.target.clone(),
            self.outcomes.clone(),
            marginal,
            conditional,
        )
    }
}
