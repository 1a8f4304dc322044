//! Interpretability artifacts from checkpoints and trajectories: per-feature
//! confusion matrices, KL-based importance reports, and information-plane
//! tables.

use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetTable, FeatureKind, FeatureSpec, FeatureValue};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, fmt_opt};
use crate::math::{bhattacharyya_coefficient, stream_rng, Tensor};
use crate::model::Checkpoint;
use crate::training::{InfoPlanePoint, Trajectory};

pub const MAX_MATRIX_VALUES: usize = 1000;
pub const DEFAULT_CROSSING_THRESHOLD_BITS: f64 = 0.05;
pub const DEFAULT_NEAR_TIE_BITS: f64 = 0.05;
const SAMPLING_STREAM: u64 = 4;

fn csv_text(rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pairwise Bhattacharyya coefficients between the encodings of a feature's
/// values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub feature: String,
    pub labels: Vec<String>,
    pub coefficients: Vec<Vec<f64>>,
    pub step: u64,
    pub beta: f64,
    pub kl_total_bits: f64,
    pub source_checkpoint: String,
}

impl ConfusionMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Mean coefficient over distinct pairs; 1 for fewer than two values.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 1.0;
        }
        let mut s = 0.0;
        for (i, row) in self.coefficients.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if i != j {
                    s += c;
                }
            }
        }
        s / (n * (n - 1)) as f64
    }

    /// Label header row and column around the coefficient grid.
    pub fn to_csv(&self) -> Result<String> {
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().cloned());
        let rows = self.labels.iter().zip(&self.coefficients).map(|(l, row)| {
            let mut r = vec![l.clone()];
            r.extend(row.iter().map(|&c| fmt_f64(c)));
            r
        });
        csv_text(std::iter::once(header).chain(rows))
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        write_text(&dir.join(format!("{stem}.csv")), &self.to_csv()?)?;
        crate::io::write_json(&dir.join(format!("{stem}.json")), self)
    }
}

/// Confusion matrix of `values` of feature `index` under a checkpoint.
/// Continuous values are sorted ascending first.
pub fn confusion_matrix(
    checkpoint: &Checkpoint,
    source: &str,
    feature: &FeatureSpec,
    index: usize,
    values: &[FeatureValue],
) -> Result<ConfusionMatrix> {
    if values.len() > MAX_MATRIX_VALUES {
        return Err(Error::Contract(format!(
            "at most {MAX_MATRIX_VALUES} values per matrix, got {}",
            values.len()
        )));
    }
    let mut values = values.to_vec();
    match &feature.kind {
        FeatureKind::Categorical { .. } => {
            if let Some(bad) = values.iter().find(|v| feature.code_of(&v.to_string()).is_none()) {
                return Err(Error::Contract(format!(
                    "unknown value `{bad}` for feature `{}`",
                    feature.name
                )));
            }
        }
        FeatureKind::Continuous { .. } => {
            let mut nums = Vec::with_capacity(values.len());
            for v in &values {
                nums.push(match v {
                    FeatureValue::Number(x) => *x,
                    FeatureValue::Label(s) => s.trim().parse().map_err(|_| {
                        Error::Contract(format!("`{s}` is not a number for feature `{}`", feature.name))
                    })?,
                });
            }
            nums.sort_by(f64::total_cmp);
            values = nums.into_iter().map(FeatureValue::Number).collect();
        }
    }
    let width = feature.encoded_width();
    let mut data = Vec::with_capacity(values.len() * width);
    for v in &values {
        data.extend(feature.encode_value(v)?);
    }
    let encoded = Tensor::matrix(values.len(), width, data)?;
    let gaussians = checkpoint.model.encode_feature_batch(index, &encoded)?;
    let n = values.len();
    let mut coefficients = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let c = bhattacharyya_coefficient(&gaussians[i], &gaussians[j])?;
            coefficients[i][j] = c;
            coefficients[j][i] = c;
        }
    }
    Ok(ConfusionMatrix {
        feature: feature.name.clone(),
        labels: values.iter().map(|v| v.to_string()).collect(),
        coefficients,
        step: checkpoint.meta.step,
        beta: checkpoint.meta.beta,
        kl_total_bits: checkpoint.meta.kl_total_bits,
        source_checkpoint: source.to_string(),
    })
}

/// Values to show for feature `i`: the vocabulary for categorical features,
/// otherwise up to `max` values sampled without replacement from the rows
/// with `seed` and sorted ascending.
pub fn matrix_values(table: &DatasetTable, i: usize, max: usize, seed: u64) -> Vec<FeatureValue> {
    let spec = &table.features()[i];
    if let Some(vocab) = spec.vocabulary() {
        return vocab.iter().cloned().map(FeatureValue::Label).collect();
    }
    let n = table.n_rows();
    let mut rng = stream_rng(seed, SAMPLING_STREAM);
    let mut xs: Vec<f64> = sample(&mut rng, n, max.min(n))
        .into_iter()
        .map(|r| match table.value(i, r) {
            FeatureValue::Number(x) => x,
            FeatureValue::Label(_) => unreachable!("continuous feature"),
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.into_iter().map(FeatureValue::Number).collect()
}

/// Trajectory point with the largest total KL not exceeding `budget`.
/// Ties go to the lower validation error, then the earlier step.
pub fn point_at_budget(points: &[InfoPlanePoint], budget: f64) -> Option<&InfoPlanePoint> {
    points
        .iter()
        .filter(|p| p.kl_total_bits <= budget)
        .min_by(|a, b| {
            b.kl_total_bits
                .total_cmp(&a.kl_total_bits)
                .then(a.val_error.total_cmp(&b.val_error))
                .then(a.step.cmp(&b.step))
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSnapshot {
    pub budget_bits: f64,
    pub step: u64,
    pub beta: f64,
    pub kl_total_bits: f64,
    pub kl_bits: Vec<f64>,
    /// Channel names, most KL first.
    pub ranking: Vec<String>,
    /// Adjacent ranking pairs whose KLs differ by less than the tie tolerance.
    pub near_ties: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstCrossing {
    pub feature: String,
    /// Latest step at which the KL is at or above the threshold; reading the
    /// run backwards, the point where the feature starts contributing.
    pub step: Option<u64>,
    pub kl_total_bits: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub features: Vec<String>,
    pub threshold_bits: f64,
    pub near_tie_bits: f64,
    pub snapshots: Vec<ImportanceSnapshot>,
    /// Unavailable budgets (below every recorded total).
    pub unavailable_budgets: Vec<f64>,
    /// Features in order of first contribution as information grows.
    pub first_crossing: Vec<FirstCrossing>,
    pub source: String,
}

pub fn rank_channels(names: &[String], kl_bits: &[f64], tie_bits: f64) -> (Vec<String>, Vec<(String, String)>) {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| kl_bits[b].total_cmp(&kl_bits[a]));
    let ties = order
        .windows(2)
        .filter(|w| (kl_bits[w[0]] - kl_bits[w[1]]).abs() < tie_bits)
        .map(|w| (names[w[0]].clone(), names[w[1]].clone()))
        .collect();
    (order.into_iter().map(|i| names[i].clone()).collect(), ties)
}

/// Rankings at each budget and the first-contribution order at
/// `threshold_bits`.
pub fn importance_report(trajectory: &Trajectory, budgets: &[f64], threshold_bits: f64) -> Result<ImportanceReport> {
    if trajectory.points.is_empty() {
        return Err(Error::Contract("importance report needs a non-empty trajectory".into()));
    }
    let names = &trajectory.channels;
    let mut snapshots = Vec::new();
    let mut unavailable = Vec::new();
    for &b in budgets {
        match point_at_budget(&trajectory.points, b) {
            Some(p) => {
                let (ranking, near_ties) = rank_channels(names, &p.kl_bits, DEFAULT_NEAR_TIE_BITS);
                snapshots.push(ImportanceSnapshot {
                    budget_bits: b,
                    step: p.step,
                    beta: p.beta,
                    kl_total_bits: p.kl_total_bits,
                    kl_bits: p.kl_bits.clone(),
                    ranking,
                    near_ties,
                });
            }
            None => unavailable.push(b),
        }
    }
    let mut first_crossing: Vec<FirstCrossing> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let hit = trajectory.points.iter().rev().find(|p| p.kl_bits[i] >= threshold_bits);
            FirstCrossing {
                feature: name.clone(),
                step: hit.map(|p| p.step),
                kl_total_bits: hit.map(|p| p.kl_total_bits),
            }
        })
        .collect();
    // Later steps mean the feature kept information longer into the ramp.
    first_crossing.sort_by(|a, b| match (a.step, b.step) {
        (Some(x), Some(y)) => y.cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(ImportanceReport {
        features: names.clone(),
        threshold_bits,
        near_tie_bits: DEFAULT_NEAR_TIE_BITS,
        snapshots,
        unavailable_budgets: unavailable,
        first_crossing,
        source: "trajectory".into(),
    })
}

impl ImportanceReport {
    pub fn snapshots_csv(&self) -> Result<String> {
        let mut header: Vec<String> = ["budget_bits", "step", "beta", "kl_total_bits"].map(String::from).to_vec();
        header.extend(self.features.iter().map(|f| format!("kl_{f}_bits")));
        header.extend(self.features.iter().map(|f| format!("rank_{f}")));
        let rows = self.snapshots.iter().map(|s| {
            let mut r = vec![fmt_f64(s.budget_bits), s.step.to_string(), fmt_f64(s.beta), fmt_f64(s.kl_total_bits)];
            r.extend(s.kl_bits.iter().map(|&k| fmt_f64(k)));
            r.extend(
                self.features
                    .iter()
                    .map(|f| (s.ranking.iter().position(|x| x == f).unwrap() + 1).to_string()),
            );
            r
        });
        csv_text(std::iter::once(header).chain(rows))
    }

    pub fn crossing_csv(&self) -> Result<String> {
        let header = ["order", "feature", "step", "kl_total_bits", "threshold_bits"].map(String::from).to_vec();
        let rows = self.first_crossing.iter().enumerate().map(|(i, c)| {
            vec![
                (i + 1).to_string(),
                c.feature.clone(),
                c.step.map(|s| s.to_string()).unwrap_or_default(),
                fmt_opt(c.kl_total_bits),
                fmt_f64(self.threshold_bits),
            ]
        });
        csv_text(std::iter::once(header).chain(rows))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join("importance.csv"), &self.snapshots_csv()?)?;
        write_text(&dir.join("first_crossing.csv"), &self.crossing_csv()?)?;
        crate::io::write_json(&dir.join("importance.json"), self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub step: u64,
    pub beta: f64,
    pub kl_total_bits: f64,
    pub val_error: f64,
    pub kl_bits: Vec<f64>,
}

impl From<&InfoPlanePoint> for PlanePoint {
    fn from(p: &InfoPlanePoint) -> Self {
        Self {
            step: p.step,
            beta: p.beta,
            kl_total_bits: p.kl_total_bits,
            val_error: p.val_error,
            kl_bits: p.kl_bits.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetSelection {
    pub budget_bits: f64,
    /// `None` when the budget is below every recorded total.
    pub point: Option<PlanePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoPlaneExport {
    pub channels: Vec<String>,
    pub budgets: Vec<BudgetSelection>,
    /// Points not dominated by any point with less total KL, by increasing
    /// total KL. Errors along it strictly decrease.
    pub frontier: Vec<PlanePoint>,
    pub source: String,
}

/// Pareto filter: keep a point when its error beats every point with no
/// more total KL.
pub fn pareto_frontier(points: &[InfoPlanePoint]) -> Vec<PlanePoint> {
    let mut sorted: Vec<&InfoPlanePoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.kl_total_bits
            .total_cmp(&b.kl_total_bits)
            .then(a.val_error.total_cmp(&b.val_error))
    });
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for p in sorted {
        if p.val_error < best {
            best = p.val_error;
            out.push(PlanePoint::from(p));
        }
    }
    out
}

pub fn info_plane_export(trajectory: &Trajectory, budgets: &[f64]) -> Result<InfoPlaneExport> {
    if budgets.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Contract("budgets must be strictly ascending".into()));
    }
    Ok(InfoPlaneExport {
        channels: trajectory.channels.clone(),
        budgets: budgets
            .iter()
            .map(|&b| BudgetSelection {
                budget_bits: b,
                point: point_at_budget(&trajectory.points, b).map(PlanePoint::from),
            })
            .collect(),
        frontier: pareto_frontier(&trajectory.points),
        source: "trajectory".into(),
    })
}

impl InfoPlaneExport {
    fn header(&self, first: &str) -> Vec<String> {
        let mut h: Vec<String> = [first, "step", "beta", "kl_total_bits", "val_error"].map(String::from).to_vec();
        h.extend(self.channels.iter().map(|c| format!("kl_{c}_bits")));
        h
    }

    fn row(lead: String, p: &PlanePoint) -> Vec<String> {
        let mut r = vec![lead, p.step.to_string(), fmt_f64(p.beta), fmt_f64(p.kl_total_bits), fmt_f64(p.val_error)];
        r.extend(p.kl_bits.iter().map(|&k| fmt_f64(k)));
        r
    }

    /// One row per budget; unavailable budgets have only the budget cell
    /// and `unavailable` in the step column.
    pub fn budgets_csv(&self) -> Result<String> {
        let width = self.header("").len();
        let rows = self.budgets.iter().map(|b| match &b.point {
            Some(p) => Self::row(fmt_f64(b.budget_bits), p),
            None => {
                let mut r = vec![fmt_f64(b.budget_bits), "unavailable".into()];
                r.resize(width, String::new());
                r
            }
        });
        csv_text(std::iter::once(self.header("budget_bits")).chain(rows))
    }

    pub fn frontier_csv(&self) -> Result<String> {
        let rows = self.frontier.iter().enumerate().map(|(i, p)| Self::row(i.to_string(), p));
        csv_text(std::iter::once(self.header("index")).chain(rows))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join("budgets.csv"), &self.budgets_csv()?)?;
        write_text(&dir.join("frontier.csv"), &self.frontier_csv()?)?;
        crate::io::write_json(&dir.join("infoplane.json"), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TaskKind;
    use crate::model::ModelConfig;
    use crate::training::{Metrics, TrainConfig};

    fn traj(points: &[(u64, [f64; 2], f64)]) -> Trajectory {
        Trajectory {
            channels: vec!["a".into(), "b".into()],
            task: TaskKind::Binary,
            config: TrainConfig::default(),
            model: ModelConfig::default(),
            points: points
                .iter()
                .map(|&(s, kl, e)| InfoPlanePoint::new(s, 1e-3 * s as f64, kl.to_vec(), e, e, Metrics::default()))
                .collect(),
            checkpoints: vec![],
        }
    }

    #[test]
    fn budget_selection_from_below() {
        let t = traj(&[(1, [3.0, 2.0], 0.1), (2, [1.5, 0.5], 0.2), (3, [0.5, 0.1], 0.4), (4, [0.0, 0.0], 0.7)]);
        let ex = info_plane_export(&t, &[0.5, 2.0, 4.0, 8.0]).unwrap();
        let steps: Vec<Option<u64>> = ex.budgets.iter().map(|b| b.point.as_ref().map(|p| p.step)).collect();
        assert_eq!(steps, vec![Some(4), Some(2), Some(2), Some(1)]);
        let ex = info_plane_export(&traj(&[(1, [1.0, 1.0], 0.1)]), &[1.0, 3.0]).unwrap();
        assert!(ex.budgets[0].point.is_none());
        assert_eq!(ex.frontier.len(), 1);
        assert!(info_plane_export(&t, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn frontier_drops_dominated_points() {
        let t = traj(&[(1, [3.0, 0.0], 0.1), (2, [2.0, 0.0], 0.3), (3, [1.0, 0.0], 0.2), (4, [0.0, 0.0], 0.7)]);
        let f = pareto_frontier(&t.points);
        let steps: Vec<u64> = f.iter().map(|p| p.step).collect();
        assert_eq!(steps, vec![4, 3, 1]);
    }

    #[test]
    fn ranking_and_crossing_order() {
        // b contributes earlier in the ramp but a holds out to the end.
        let t = traj(&[(1, [0.2, 2.0], 0.1), (2, [0.1, 0.6], 0.2), (3, [0.06, 0.0], 0.5), (4, [0.0, 0.0], 0.7)]);
        let r = importance_report(&t, &[1.0, 5.0], 0.05).unwrap();
        assert_eq!(r.snapshots[0].ranking, vec!["b", "a"]);
        assert_eq!(r.first_crossing[0].feature, "a");
        assert_eq!(r.first_crossing[0].step, Some(3));
        assert_eq!(r.first_crossing[1].step, Some(2));
        assert_eq!(r.threshold_bits, 0.05);
    }

    #[test]
    fn single_channel_is_ranked_first() {
        let mut t = traj(&[(1, [0.3, 0.0], 0.1)]);
        t.channels.truncate(1);
        t.points[0].kl_bits.truncate(1);
        let r = importance_report(&t, &[1.0], 0.05).unwrap();
        assert_eq!(r.snapshots[0].ranking, vec!["a"]);
    }

    #[test]
    fn duplicated_features_are_flagged() {
        let (rank, ties) = rank_channels(&["x".into(), "x2".into(), "z".into()], &[1.0, 1.01, 0.2], 0.05);
        assert_eq!(rank[2], "z");
        assert_eq!(ties.len(), 1);
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        assert!(importance_report(&traj(&[]), &[1.0], 0.05).is_err());
    }
}
