use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::{beta_schedule, evaluate, CheckpointRef, EvalOptions, InfoPlanePoint, TrainConfig, Trajectory};
use crate::data::{DatasetTable, EncodedBatch, TargetSpec};
use crate::error::{Error, Result};
use crate::math::{stream_rng, AdamState, SeededRng, Tape};
use crate::model::{composite_loss, Bottleneck, ChannelNoise, Checkpoint, CheckpointMeta, DibModel, ForwardOptions};

const ORDER_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Receives checkpoints during training and returns a reference to each.
pub trait CheckpointSink {
    fn save(&mut self, checkpoint: &Checkpoint) -> Result<String>;
}

/// Keeps checkpoints in memory; references are `memory:<index>`.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub saved: Vec<Checkpoint>,
}

impl CheckpointSink for MemorySink {
    fn save(&mut self, checkpoint: &Checkpoint) -> Result<String> {
        self.saved.push(checkpoint.clone());
        Ok(format!("memory:{}", self.saved.len() - 1))
    }
}

/// Writes `checkpoints/step_<n>.ckpt` under a run directory and returns the
/// path relative to it.
#[derive(Debug)]
pub struct DirectorySink {
    root: PathBuf,
}

impl DirectorySink {
    pub const SUBDIR: &'static str = "checkpoints";

    pub fn new(root: &Path) -> Result<Self> {
        let dir = root.join(Self::SUBDIR);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { root: root.to_path_buf() })
    }
}

impl CheckpointSink for DirectorySink {
    fn save(&mut self, checkpoint: &Checkpoint) -> Result<String> {
        let rel = format!("{}/step_{:08}.ckpt", Self::SUBDIR, checkpoint.meta.step);
        checkpoint.save(&self.root.join(&rel))?;
        Ok(rel)
    }
}

/// Incremental training state. Each call to [`Trainer::step`] performs one
/// Adam update; evaluation and checkpointing happen on their schedules.
pub struct Trainer {
    config: TrainConfig,
    train: EncodedBatch,
    validation: EncodedBatch,
    target: TargetSpec,
    schema_hash: String,
    model: DibModel,
    adam: AdamState,
    order_rng: SeededRng,
    noise_rng: SeededRng,
    order: Vec<usize>,
    cursor: usize,
    step: u64,
    error_sum: f64,
    error_count: usize,
    trajectory: Trajectory,
}

impl Trainer {
    pub fn new(config: TrainConfig, table: &DatasetTable, model: DibModel) -> Result<Self> {
        config.validate()?;
        let widths: Vec<usize> = table.features().iter().map(|f| f.encoded_width()).collect();
        if model.input_widths() != widths || model.head().width() != table.output_width() {
            return Err(Error::Config(format!(
                "model layout (inputs {:?}, {} outputs) does not match the table (inputs {widths:?}, {} outputs)",
                model.input_widths(),
                model.head().width(),
                table.output_width()
            )));
        }
        let splits = table.splits();
        let train = table.encode_rows(&splits.train);
        let validation = table.encode_rows(&splits.validation);
        let channels = match model.config().bottleneck {
            Bottleneck::Distributed => table.features().iter().map(|f| f.name.clone()).collect(),
            Bottleneck::Fused => vec!["fused".to_string()],
        };
        let trajectory = Trajectory {
            channels,
            task: table.task(),
            config: config.clone(),
            model: model.config().clone(),
            points: Vec::new(),
            checkpoints: Vec::new(),
        };
        let adam = AdamState::new(model.params().tensors(), config.learning_rate);
        let mut order_rng = stream_rng(config.seed, ORDER_STREAM);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut order_rng);
        Ok(Self {
            noise_rng: stream_rng(config.seed, NOISE_STREAM),
            order_rng,
            order,
            cursor: 0,
            train,
            validation,
            target: table.target_spec().clone(),
            schema_hash: table.schema_hash(),
            model,
            adam,
            step: 0,
            error_sum: 0.0,
            error_count: 0,
            trajectory,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &DibModel {
        &self.model
    }

    pub fn into_model(self) -> DibModel {
        self.model
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn validation(&self) -> &EncodedBatch {
        &self.validation
    }

    /// Updates performed so far.
    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.total_steps()
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            samples: self.config.eval_samples,
            seed: self.config.seed,
        }
    }

    fn next_batch(&mut self) -> Vec<usize> {
        let b = self.config.batch_size.min(self.order.len());
        if self.cursor + b > self.order.len() {
            self.order.shuffle(&mut self.order_rng);
            self.cursor = 0;
        }
        let rows = self.order[self.cursor..self.cursor + b].to_vec();
        self.cursor += b;
        rows
    }

    fn abort(&self, step: u64) -> Error {
        Error::NumericalAbort {
            step,
            last_checkpoint: self.trajectory.checkpoints.last().map(|c| c.reference.clone()),
        }
    }

    /// One update. Returns the new point when this step was an evaluation
    /// step.
    pub fn step(&mut self, sink: &mut dyn CheckpointSink) -> Result<Option<&InfoPlanePoint>> {
        if self.is_finished() {
            return Ok(None);
        }
        let step = self.step + 1;
        let beta = beta_schedule(step, &self.config);
        let rows = self.next_batch();
        let batch = self.train.select(&rows);

        let mut tape = Tape::new();
        let out = self.model.forward(
            &mut tape,
            &batch.features,
            &ForwardOptions::train(self.config.dropout_rate),
            ChannelNoise::Sample,
            &mut self.noise_rng,
        )?;
        let terms = composite_loss(&mut tape, out.prediction, &batch.targets, &out.kl, beta)?;
        let total = tape.value(terms.total).item();
        if !total.is_finite() {
            return Err(self.abort(step));
        }
        let grads = tape.backward(terms.total)?;
        match self.adam.step(self.model.params_mut().tensors_mut(), &grads) {
            Ok(()) => {}
            Err(Error::NonFiniteGradient { .. }) => return Err(self.abort(step)),
            Err(e) => return Err(e),
        }
        self.step = step;
        self.error_sum += tape.value(terms.error).item();
        self.error_count += 1;

        let last = step == self.config.total_steps();
        let checkpoint_due = last || step % self.config.checkpoint_every == 0;
        if !(last || checkpoint_due || step % self.config.eval_every == 0) {
            return Ok(None);
        }
        let eval = evaluate(&self.model, &self.validation, &self.target, &self.eval_options())?;
        let point = InfoPlanePoint::new(
            step,
            beta,
            eval.kl_bits,
            self.error_sum / self.error_count as f64,
            eval.error,
            eval.metrics,
        );
        self.error_sum = 0.0;
        self.error_count = 0;
        if checkpoint_due {
            let checkpoint = Checkpoint {
                meta: CheckpointMeta {
                    step,
                    beta,
                    kl_total_bits: point.kl_total_bits,
                    schema_hash: self.schema_hash.clone(),
                },
                model: self.model.clone(),
            };
            let reference = sink.save(&checkpoint)?;
            self.trajectory.checkpoints.push(CheckpointRef { step, reference });
        }
        self.trajectory.points.push(point);
        Ok(self.trajectory.points.last())
    }

    /// Runs to the end of the schedule.
    pub fn run(mut self, sink: &mut dyn CheckpointSink) -> Result<(DibModel, Trajectory)> {
        while !self.is_finished() {
            self.step(sink)?;
        }
        Ok((self.model, self.trajectory))
    }
}

/// Trains `model` in place over the full schedule and returns the recorded
/// trajectory.
pub fn train(
    config: &TrainConfig,
    table: &DatasetTable,
    model: &mut DibModel,
    sink: &mut dyn CheckpointSink,
) -> Result<Trajectory> {
    let trainer = Trainer::new(config.clone(), table, model.clone())?;
    let (trained, trajectory) = trainer.run(sink)?;
    *model = trained;
    Ok(trajectory)
}
