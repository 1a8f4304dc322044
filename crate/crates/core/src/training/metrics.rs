use serde::{Deserialize, Serialize};

use crate::data::{EncodedBatch, TargetSpec, Targets};
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, nats_to_bits, stream_rng, Tape, Tensor};
use crate::model::{ChannelNoise, DibModel, ForwardOptions};

/// Rows per forward pass during evaluation.
const EVAL_CHUNK: usize = 1024;
const EVAL_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// 0 uses posterior means; otherwise predictions are averaged over this
    /// many channel samples.
    pub samples: usize,
    pub seed: u64,
}

/// Task metrics. Fields that do not apply to the task are `None`, as is AUC
/// when only one class is present.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub cross_entropy: Option<f64>,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
    /// On the original target scale.
    pub rmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean KL per channel, in bits.
    pub kl_bits: Vec<f64>,
    /// The error term being optimized: cross entropy (nats) or squared error
    /// on the standardized scale.
    pub error: f64,
    pub metrics: Metrics,
}

/// Evaluates a frozen model on a batch without dropout.
pub fn evaluate(model: &DibModel, batch: &EncodedBatch, target: &TargetSpec, opts: &EvalOptions) -> Result<Evaluation> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Contract("evaluation needs at least one row".into()));
    }
    let width = model.head().width();
    let mut kl_sum = vec![0.0; model.channel_count()];
    let mut preds = Vec::with_capacity(n * width);
    let mut rng = stream_rng(opts.seed, EVAL_STREAM);
    let rows: Vec<usize> = (0..n).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let part = batch.select(chunk);
        let passes = opts.samples.max(1);
        let mut acc = vec![0.0; chunk.len() * width];
        for pass in 0..passes {
            let mut tape = Tape::new();
            let noise = if opts.samples == 0 { ChannelNoise::Mean } else { ChannelNoise::Sample };
            let out = model.forward(&mut tape, &part.features, &ForwardOptions::eval(), noise, &mut rng)?;
            let p = tape.value(out.prediction);
            match part.targets {
                // Average class probabilities, not logits.
                Targets::Classes(_) => {
                    for r in 0..chunk.len() {
                        let row = p.row(r);
                        let lse = log_sum_exp(row);
                        for (k, &z) in row.iter().enumerate() {
                            acc[r * width + k] += (z - lse).exp();
                        }
                    }
                }
                Targets::Real(_) => {
                    for (a, v) in acc.iter_mut().zip(p.data()) {
                        *a += v;
                    }
                }
            }
            if pass == 0 {
                // KL depends only on the posterior, not on the noise.
                for (s, &k) in kl_sum.iter_mut().zip(&out.kl) {
                    *s += tape.value(k).sum();
                }
            }
        }
        preds.extend(acc.into_iter().map(|a| a / passes as f64));
    }
    let kl_bits = kl_sum.iter().map(|s| nats_to_bits(s / n as f64)).collect();
    let preds = Tensor::matrix(n, width, preds)?;

    match (&batch.targets, target) {
        (Targets::Classes(y), TargetSpec::Classes { labels }) => {
            let mut ce = 0.0;
            let mut correct = 0usize;
            for (r, &c) in y.iter().enumerate() {
                let row = preds.row(r);
                ce -= row[c].max(f64::MIN_POSITIVE).ln();
                let best = (0..width).fold(0, |b, k| if row[k] > row[b] { k } else { b });
                correct += usize::from(best == c);
            }
            let ce = ce / n as f64;
            let auc = if labels.len() == 2 {
                let scores: Vec<f64> = (0..n).map(|r| preds.row(r)[1]).collect();
                let pos: Vec<bool> = y.iter().map(|&c| c == 1).collect();
                roc_auc(&scores, &pos)
            } else {
                None
            };
            Ok(Evaluation {
                kl_bits,
                error: ce,
                metrics: Metrics {
                    cross_entropy: Some(ce),
                    accuracy: Some(correct as f64 / n as f64),
                    auc,
                    rmse: None,
                },
            })
        }
        (Targets::Real(y), TargetSpec::Real { std, .. }) => {
            let mse = preds.data().iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n as f64;
            Ok(Evaluation {
                kl_bits,
                error: mse,
                metrics: Metrics {
                    rmse: Some(mse.sqrt() * std),
                    ..Metrics::default()
                },
            })
        }
        _ => Err(Error::Contract("targets do not match the target description".into())),
    }
}

/// Area under the ROC curve; tied scores count one half. `None` when either
/// class is absent.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len(), "scores and labels differ in length");
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mann-Whitney U with average ranks over tie groups.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SeededRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn auc_perfect_and_reversed() {
        let s = [0.1, 0.2, 0.8, 0.9];
        assert_eq!(roc_auc(&s, &[false, false, true, true]), Some(1.0));
        assert_eq!(roc_auc(&s, &[true, true, false, false]), Some(0.0));
    }

    #[test]
    fn auc_ties_count_half() {
        assert_eq!(roc_auc(&[0.5; 4], &[true, false, true, false]), Some(0.5));
        // One tied pair out of four.
        assert_eq!(roc_auc(&[0.3, 0.5, 0.5, 0.9], &[false, false, true, true]), Some(0.875));
    }

    #[test]
    fn auc_single_class_is_undefined() {
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), None);
    }

    #[test]
    fn auc_random_scores_near_half() {
        let mut rng = SeededRng::seed_from_u64(4);
        let n = 10_000;
        let s: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let auc = roc_auc(&s, &y).unwrap();
        assert!((auc - 0.5).abs() < 0.02, "{auc}");
    }
}
