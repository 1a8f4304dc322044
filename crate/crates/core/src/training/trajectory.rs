use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Metrics, TrainConfig};
use crate::data::TaskKind;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, fmt_opt};
use crate::model::ModelConfig;

/// One evaluation of the running model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoPlanePoint {
    pub step: u64,
    pub beta: f64,
    /// Mean validation KL per channel, in bits.
    pub kl_bits: Vec<f64>,
    pub kl_total_bits: f64,
    /// Mean minibatch error term since the previous point.
    pub train_error: f64,
    pub val_error: f64,
    pub metrics: Metrics,
}

impl InfoPlanePoint {
    pub fn new(step: u64, beta: f64, kl_bits: Vec<f64>, train_error: f64, val_error: f64, metrics: Metrics) -> Self {
        let kl_total_bits = kl_bits.iter().sum();
        Self {
            step,
            beta,
            kl_bits,
            kl_total_bits,
            train_error,
            val_error,
            metrics,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub step: u64,
    /// Path relative to the run directory, or a sink-specific key.
    pub reference: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Channel names: the features, or a single `fused` channel.
    pub channels: Vec<String>,
    pub task: TaskKind,
    pub config: TrainConfig,
    pub model: ModelConfig,
    pub points: Vec<InfoPlanePoint>,
    pub checkpoints: Vec<CheckpointRef>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&InfoPlanePoint> {
        self.points.last()
    }

    /// Checkpoint saved at exactly `step`, if any.
    pub fn checkpoint_at(&self, step: u64) -> Option<&CheckpointRef> {
        self.checkpoints.iter().find(|c| c.step == step)
    }

    fn metric_columns(&self) -> &'static [&'static str] {
        match self.task {
            TaskKind::Binary => &["val_cross_entropy", "val_accuracy", "val_auc"],
            TaskKind::Classification => &["val_cross_entropy", "val_accuracy"],
            TaskKind::Regression => &["val_rmse"],
        }
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["step".to_string(), "beta".into(), "kl_total_bits".into()];
        h.extend(self.channels.iter().map(|c| format!("kl_{c}_bits")));
        h.extend(["train_error".to_string(), "val_error".into()]);
        h.extend(self.metric_columns().iter().map(|s| s.to_string()));
        h
    }

    /// CSV text, one row per point; undefined metrics are empty cells.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.csv_header())?;
        for p in &self.points {
            let mut row = vec![p.step.to_string(), fmt_f64(p.beta), fmt_f64(p.kl_total_bits)];
            row.extend(p.kl_bits.iter().map(|&k| fmt_f64(k)));
            row.push(fmt_f64(p.train_error));
            row.push(fmt_f64(p.val_error));
            for col in self.metric_columns() {
                let m = &p.metrics;
                row.push(fmt_opt(match *col {
                    "val_cross_entropy" => m.cross_entropy,
                    "val_accuracy" => m.accuracy,
                    "val_auc" => m.auc,
                    _ => m.rmse,
                }));
            }
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// Short human summary of the last point.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        if let Some(p) = self.last() {
            let _ = write!(
                s,
                "step {} beta {:.4e} total KL {:.4} bits val error {:.5}",
                p.step, p.beta, p.kl_total_bits, p.val_error
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let t = Trajectory {
            channels: vec!["a".into(), "b".into()],
            task: TaskKind::Binary,
            config: TrainConfig::default(),
            model: ModelConfig::default(),
            points: vec![InfoPlanePoint::new(
                250,
                2e-5,
                vec![1.5, 0.25],
                0.5,
                0.625,
                Metrics {
                    cross_entropy: Some(0.625),
                    accuracy: Some(0.75),
                    auc: None,
                    rmse: None,
                },
            )],
            checkpoints: vec![],
        };
        let csv = t.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,beta,kl_total_bits,kl_a_bits,kl_b_bits,train_error,val_error,val_cross_entropy,val_accuracy,val_auc"
        );
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "250");
        assert_eq!(row[2].parse::<f64>().unwrap(), 1.75);
        assert_eq!(row[9], "");
    }
}
