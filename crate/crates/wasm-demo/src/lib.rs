//! Browser bindings: Gaussian overlap, exact information for a 2x2 table,
//! and a small annealed run on sampled data.

use dib_core::data::{DatasetTable, FeatureValue};
use dib_core::math::{bhattacharyya_coefficient, stream_rng, DiagonalGaussian};
use dib_core::model::{Checkpoint, DibModel, ModelConfig, PredictionHead};
use dib_core::synthetic::{Alphabet, DiscreteJoint};
use dib_core::training::{CheckpointSink, TrainConfig, Trainer};
use wasm_bindgen::prelude::*;

fn js_err(e: dib_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Pairwise Bhattacharyya coefficients for `n` Gaussians in `dim`
/// dimensions. `means` and `log_vars` are row-major `n x dim`; the result is
/// row-major `n x n`.
#[wasm_bindgen]
pub fn overlap_matrix(means: &[f64], log_vars: &[f64], dim: usize) -> Result<Vec<f64>, JsError> {
    if dim == 0 || means.len() % dim != 0 || means.len() != log_vars.len() {
        return Err(JsError::new("means and log_vars must both be n x dim"));
    }
    let gs = means
        .chunks(dim)
        .zip(log_vars.chunks(dim))
        .map(|(m, l)| DiagonalGaussian::new(m.to_vec(), l.to_vec()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(js_err)?;
    let mut out = Vec::with_capacity(gs.len() * gs.len());
    for a in &gs {
        for b in &gs {
            out.push(bhattacharyya_coefficient(a, b).map_err(js_err)?);
        }
    }
    Ok(out)
}

fn two_by_two(p_positive: &[f64]) -> Result<DiscreteJoint, JsError> {
    let bit = |name: &str| Alphabet {
        name: name.into(),
        values: vec!["0".into(), "1".into()],
    };
    if p_positive.len() != 4 {
        return Err(JsError::new("expected four probabilities: (a,b) = 00, 01, 10, 11"));
    }
    DiscreteJoint::binary(vec![bit("a"), bit("b")], p_positive).map_err(js_err)
}

/// `[H(Y), H(Y|A,B), I(A,B;Y), I(A;Y), I(B;Y)]` in bits for uniform binary
/// inputs and `P(y=1 | a, b)` given in row-major order.
#[wasm_bindgen]
pub fn exact_information(p_positive: &[f64]) -> Result<Vec<f64>, JsError> {
    let j = two_by_two(p_positive)?;
    Ok(vec![
        j.target_entropy(),
        j.conditional_entropy(),
        j.mutual_information(),
        j.standalone_feature_mi(0).map_err(js_err)?,
        j.standalone_feature_mi(1).map_err(js_err)?,
    ])
}

struct Discard;

impl CheckpointSink for Discard {
    fn save(&mut self, _: &Checkpoint) -> dib_core::Result<String> {
        Ok("discarded".into())
    }
}

/// A short annealed run on rows sampled from a 2x2 table.
#[wasm_bindgen]
pub struct SyntheticTrainer {
    table: DatasetTable,
    trainer: Trainer,
}

#[wasm_bindgen]
impl SyntheticTrainer {
    #[wasm_bindgen(constructor)]
    pub fn new(p_positive: &[f64], rows: usize, annealing_steps: u64, seed: u64) -> Result<SyntheticTrainer, JsError> {
        let joint = two_by_two(p_positive)?;
        let table = joint.sample_table(rows, seed, [0.6, 0.3, 0.1]).map_err(js_err)?;
        let config = TrainConfig {
            annealing_steps,
            batch_size: 64,
            learning_rate: 1e-3,
            eval_every: 25,
            checkpoint_every: u64::MAX,
            seed,
            ..TrainConfig::default()
        };
        let model_config = ModelConfig {
            embedding_dim: 2,
            encoder_hidden: vec![32, 32],
            decoder_hidden: vec![64, 64],
            ..ModelConfig::default()
        };
        let widths = table.features().iter().map(|f| f.encoded_width()).collect();
        let model = DibModel::new(
            model_config,
            widths,
            PredictionHead::Classification { classes: 2 },
            &mut stream_rng(seed, 0),
        )
        .map_err(js_err)?;
        let trainer = Trainer::new(config, &table, model).map_err(js_err)?;
        Ok(SyntheticTrainer { table, trainer })
    }

    pub fn total_steps(&self) -> u64 {
        self.trainer.config().total_steps()
    }

    pub fn current_step(&self) -> u64 {
        self.trainer.current_step()
    }

    pub fn finished(&self) -> bool {
        self.trainer.is_finished()
    }

    /// Runs up to `steps` updates. Returns the points evaluated meanwhile as
    /// rows of `[step, beta, kl_a_bits, kl_b_bits, val_cross_entropy]`.
    pub fn step_chunk(&mut self, steps: u32) -> Result<Vec<f64>, JsError> {
        let mut out = Vec::new();
        for _ in 0..steps {
            if self.trainer.is_finished() {
                break;
            }
            if let Some(p) = self.trainer.step(&mut Discard).map_err(js_err)? {
                out.extend([
                    p.step as f64,
                    p.beta,
                    p.kl_bits[0],
                    p.kl_bits[1],
                    p.metrics.cross_entropy.unwrap_or(f64::NAN),
                ]);
            }
        }
        Ok(out)
    }

    /// Current overlap between the two values of feature `index`.
    pub fn value_overlap(&self, index: usize) -> Result<f64, JsError> {
        let spec = self
            .table
            .features()
            .get(index)
            .ok_or_else(|| JsError::new("feature index out of range"))?;
        let model = self.trainer.model();
        let encode = |v: &str| -> Result<DiagonalGaussian, JsError> {
            let x = spec.encode_value(&FeatureValue::Label(v.into())).map_err(js_err)?;
            model.encode_feature(index, &x).map_err(js_err)
        };
        bhattacharyya_coefficient(&encode("0")?, &encode("1")?).map_err(js_err)
    }
}
