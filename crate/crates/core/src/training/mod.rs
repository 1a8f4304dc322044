//! Single-run annealed training: a logarithmic β ramp, minibatch Adam, and
//! a stream of information-plane points measured on the validation split.

mod metrics;
mod trainer;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use metrics::{evaluate, roc_auc, EvalOptions, Evaluation, Metrics};
pub use trainer::{train, CheckpointSink, DirectorySink, MemorySink, Trainer};
pub use trajectory::{CheckpointRef, InfoPlanePoint, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta_initial: f64,
    pub beta_final: f64,
    pub annealing_steps: u64,
    /// Steps at constant `beta_initial` before the ramp; defaults to a tenth
    /// of `annealing_steps`.
    pub warmup_steps: Option<u64>,
    pub dropout_rate: f64,
    pub seed: u64,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    /// Channel samples averaged per evaluation; 0 evaluates at posterior means.
    pub eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 3e-4,
            beta_initial: 2e-5,
            beta_final: 2.0,
            annealing_steps: 50_000,
            warmup_steps: None,
            dropout_rate: 0.0,
            seed: 0,
            eval_every: 250,
            checkpoint_every: 5000,
            eval_samples: 0,
        }
    }
}

impl TrainConfig {
    pub fn warmup(&self) -> u64 {
        self.warmup_steps.unwrap_or(self.annealing_steps / 10)
    }

    pub fn total_steps(&self) -> u64 {
        self.warmup() + self.annealing_steps
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.beta_initial > 0.0 && self.beta_initial < self.beta_final) || !self.beta_final.is_finite() {
            return fail(format!(
                "need 0 < beta_initial < beta_final, got {} and {}",
                self.beta_initial, self.beta_final
            ));
        }
        if self.annealing_steps == 0 {
            return fail("annealing_steps must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate));
        }
        if self.eval_every == 0 || self.checkpoint_every == 0 {
            return fail("eval_every and checkpoint_every must be positive".into());
        }
        Ok(())
    }
}

/// β used for the update numbered `step`.
///
/// Constant `beta_initial` through warmup, then geometric interpolation to
/// `beta_final` over `annealing_steps`, then constant `beta_final`.
pub fn beta_schedule(step: u64, config: &TrainConfig) -> f64 {
    let warmup = config.warmup();
    if step <= warmup {
        return config.beta_initial;
    }
    let t = (step - warmup) as f64 / config.annealing_steps as f64;
    if t >= 1.0 {
        config.beta_final
    } else {
        config.beta_initial * (t * (config.beta_final / config.beta_initial).ln()).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let c = TrainConfig {
            annealing_steps: 20_000,
            ..TrainConfig::default()
        };
        assert_eq!(c.warmup(), 2000);
        assert_eq!(beta_schedule(0, &c), 2e-5);
        assert_eq!(beta_schedule(1999, &c), 2e-5);
        assert_eq!(beta_schedule(22_000, &c), 2.0);
        assert_eq!(beta_schedule(30_000, &c), 2.0);
        let mid = beta_schedule(12_000, &c);
        assert!((mid - 6.324_555_320_336_759e-3).abs() < 1e-15, "{mid}");
    }

    #[test]
    fn schedule_is_monotone() {
        let c = TrainConfig {
            annealing_steps: 1000,
            warmup_steps: Some(37),
            ..TrainConfig::default()
        };
        let mut prev = 0.0;
        for s in 0..1200 {
            let b = beta_schedule(s, &c);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TrainConfig { beta_initial: 0.0, ..Default::default() },
            TrainConfig { beta_initial: 3.0, ..Default::default() },
            TrainConfig { annealing_steps: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { dropout_rate: 1.0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
        TrainConfig::default().validate().unwrap();
    }
}
