//! The distributed bottleneck network.
//!
//! Each feature passes through its own encoder MLP to a diagonal Gaussian
//! over a `d`-dimensional channel. One sample per channel (or the posterior
//! mean at evaluation time) is concatenated in feature order and decoded by
//! a joint MLP into logits or a scalar prediction.

mod checkpoint;
mod loss;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{DiagonalGaussian, Mlp, MlpOptions, ParamStore, SeededRng, Tape, Tensor, Var, LOG_VAR_LIMIT};

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use loss::{composite_loss, loss_classification, loss_regression, LossTerms};

/// How features reach the decoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bottleneck {
    /// One encoder and channel per feature.
    #[default]
    Distributed,
    /// A single encoder over the concatenation of all encoded features.
    Fused,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub bottleneck: Bottleneck,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 8,
            encoder_hidden: vec![128, 128],
            decoder_hidden: vec![256, 256],
            bottleneck: Bottleneck::Distributed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictionHead {
    Classification { classes: usize },
    Regression,
}

impl PredictionHead {
    pub fn width(self) -> usize {
        match self {
            PredictionHead::Classification { classes } => classes,
            PredictionHead::Regression => 1,
        }
    }
}

/// Where channel samples come from during a forward pass.
#[derive(Clone, Copy, Debug)]
pub enum ChannelNoise<'a> {
    /// Draw standard-normal noise from the pass's generator.
    Sample,
    /// Use posterior means.
    Mean,
    /// Use caller-supplied noise, one `[n, d]` tensor per channel.
    Fixed(&'a [Tensor]),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    pub train_mode: bool,
    pub dropout_rate: f64,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        Self {
            train_mode: false,
            dropout_rate: 0.0,
        }
    }

    pub fn train(dropout_rate: f64) -> Self {
        Self {
            train_mode: true,
            dropout_rate,
        }
    }
}

/// Channel posterior parameters as recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct ChannelVars {
    pub mean: Var,
    pub log_var: Var,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `[n, head width]`.
    pub prediction: Var,
    /// Per-row KL (nats) of each channel, `[n]` each.
    pub kl: Vec<Var>,
    pub channels: Vec<ChannelVars>,
}

/// Parameters of the encoders and decoder plus the layout needed to use them.
#[derive(Clone, Debug, PartialEq)]
pub struct DibModel {
    config: ModelConfig,
    input_widths: Vec<usize>,
    head: PredictionHead,
    encoders: Vec<Mlp>,
    decoder: Mlp,
    store: ParamStore,
}

impl DibModel {
    /// Builds and initializes a model for features with the given encoded
    /// widths.
    pub fn new<R: Rng + ?Sized>(
        config: ModelConfig,
        input_widths: Vec<usize>,
        head: PredictionHead,
        rng: &mut R,
    ) -> Result<Self> {
        if input_widths.is_empty() || input_widths.contains(&0) {
            return Err(Error::Config("model needs at least one feature of non-zero width".into()));
        }
        if config.embedding_dim == 0 || head.width() == 0 {
            return Err(Error::Config("embedding dimension and head width must be positive".into()));
        }
        let d = config.embedding_dim;
        let mut store = ParamStore::new();
        let encoder_inputs: Vec<usize> = match config.bottleneck {
            Bottleneck::Distributed => input_widths.clone(),
            Bottleneck::Fused => vec![input_widths.iter().sum()],
        };
        let encoders = encoder_inputs
            .iter()
            .map(|&w| {
                let mut widths = vec![w];
                widths.extend(&config.encoder_hidden);
                widths.push(2 * d);
                Mlp::init(&widths, &mut store, rng)
            })
            .collect::<Vec<_>>();
        let mut widths = vec![d * encoders.len()];
        widths.extend(&config.decoder_hidden);
        widths.push(head.width());
        let decoder = Mlp::init(&widths, &mut store, rng);
        Ok(Self {
            config,
            input_widths,
            head,
            encoders,
            decoder,
            store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_widths(&self) -> &[usize] {
        &self.input_widths
    }

    pub fn head(&self) -> PredictionHead {
        self.head
    }

    pub fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    pub fn encoders(&self) -> &[Mlp] {
        &self.encoders
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Number of channels: features in distributed mode, one when fused.
    pub fn channel_count(&self) -> usize {
        self.encoders.len()
    }

    /// Records one channel's encoder and returns its clamped posterior.
    fn encode_channel<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        channel: usize,
        input: Var,
        opts: &ForwardOptions,
        rng: &mut R,
    ) -> Result<ChannelVars> {
        let d = self.config.embedding_dim;
        let mlp_opts = MlpOptions {
            dropout_rate: opts.dropout_rate,
            train_mode: opts.train_mode,
            ..MlpOptions::default()
        };
        let out = self.encoders[channel].apply(&self.store, tape, input, &mlp_opts, rng)?;
        let mean = tape.slice_cols(out, 0, d)?;
        let raw_lv = tape.slice_cols(out, d, d)?;
        let log_var = tape.clamp(raw_lv, -LOG_VAR_LIMIT, LOG_VAR_LIMIT);
        Ok(ChannelVars { mean, log_var })
    }

    /// Full forward pass over a batch of encoded features.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        features: &[Tensor],
        opts: &ForwardOptions,
        noise: ChannelNoise<'_>,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        if features.len() != self.input_widths.len() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.input_widths.len(),
                features.len()
            )));
        }
        let n = features[0].rows();
        for (i, (f, &w)) in features.iter().zip(&self.input_widths).enumerate() {
            if f.cols() != w || f.rows() != n || f.shape().len() != 2 {
                return Err(Error::Shape(format!(
                    "feature {i}: expected [{n}, {w}], got {:?}",
                    f.shape()
                )));
            }
        }
        let inputs: Vec<Var> = match self.config.bottleneck {
            Bottleneck::Distributed => features.iter().map(|f| tape.constant(f.clone())).collect(),
            Bottleneck::Fused => {
                let parts: Vec<Var> = features.iter().map(|f| tape.constant(f.clone())).collect();
                vec![tape.concat_cols(&parts)?]
            }
        };

        let d = self.config.embedding_dim;
        let mut channels = Vec::with_capacity(inputs.len());
        let mut samples = Vec::with_capacity(inputs.len());
        let mut kl = Vec::with_capacity(inputs.len());
        for (c, &input) in inputs.iter().enumerate() {
            let ch = self.encode_channel(tape, c, input, opts, rng)?;
            kl.push(tape.gaussian_kl(ch.mean, ch.log_var)?);
            let u = match noise {
                ChannelNoise::Mean => ch.mean,
                ChannelNoise::Sample => {
                    let eps = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    tape.reparameterize(ch.mean, ch.log_var, Tensor::matrix(n, d, eps)?)?
                }
                ChannelNoise::Fixed(all) => {
                    let eps = all.get(c).ok_or_else(|| {
                        Error::Shape(format!("no fixed noise supplied for channel {c}"))
                    })?;
                    tape.reparameterize(ch.mean, ch.log_var, eps.clone())?
                }
            };
            channels.push(ch);
            samples.push(u);
        }
        let joint = tape.concat_cols(&samples)?;
        let mlp_opts = MlpOptions {
            dropout_rate: opts.dropout_rate,
            train_mode: opts.train_mode,
            ..MlpOptions::default()
        };
        let prediction = self.decoder.apply(&self.store, tape, joint, &mlp_opts, rng)?;
        Ok(ForwardOutput {
            prediction,
            kl,
            channels,
        })
    }

    /// Posterior of feature `i` for each row of `encoded` (`[n, width_i]`),
    /// evaluated without dropout.
    pub fn encode_feature_batch(&self, i: usize, encoded: &Tensor) -> Result<Vec<DiagonalGaussian>> {
        if self.config.bottleneck != Bottleneck::Distributed {
            return Err(Error::Contract("per-feature channels exist only in distributed mode".into()));
        }
        let w = *self
            .input_widths
            .get(i)
            .ok_or_else(|| Error::Contract(format!("no feature {i}")))?;
        if encoded.cols() != w || encoded.shape().len() != 2 {
            return Err(Error::Dimension {
                layer: 0,
                expected: w,
                actual: encoded.cols(),
            });
        }
        let mut tape = Tape::new();
        let input = tape.constant(encoded.clone());
        // Dropout is off, so the generator is never drawn from.
        let mut rng = <SeededRng as SeedableRng>::seed_from_u64(0);
        let ch = self.encode_channel(&mut tape, i, input, &ForwardOptions::eval(), &mut rng)?;
        let (m, l) = (tape.value(ch.mean), tape.value(ch.log_var));
        (0..encoded.rows())
            .map(|r| DiagonalGaussian::new(m.row(r).to_vec(), l.row(r).to_vec()))
            .collect()
    }

    /// Posterior of feature `i` for a single encoded value.
    pub fn encode_feature(&self, i: usize, encoded: &[f64]) -> Result<DiagonalGaussian> {
        let t = Tensor::matrix(1, encoded.len(), encoded.to_vec())?;
        Ok(self.encode_feature_batch(i, &t)?.remove(0))
    }

    /// Replaces all parameter values, checking shapes.
    pub fn load_params(&mut self, tensors: Vec<Tensor>) -> Result<()> {
        if tensors.len() != self.store.len()
            || tensors.iter().zip(self.store.tensors()).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Checkpoint("parameter shapes do not match the model layout".into()));
        }
        self.store = ParamStore::from_tensors(tensors);
        Ok(())
    }
}
