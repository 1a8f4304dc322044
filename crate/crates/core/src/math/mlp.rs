use rand::Rng;

use super::tape::{ParamId, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const LEAKY_RELU_ALPHA: f64 = 0.2;

/// Flat, ordered storage for every trainable tensor of a model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tensors(tensors: Vec<Tensor>) -> Self {
        Self { tensors }
    }

    pub fn push(&mut self, t: Tensor) -> ParamId {
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// One affine layer: `x W + b` with `W` stored as `[in, out]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Runtime switches for a forward pass through an [`Mlp`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlpOptions {
    pub alpha: f64,
    pub dropout_rate: f64,
    pub train_mode: bool,
}

impl Default for MlpOptions {
    fn default() -> Self {
        Self {
            alpha: LEAKY_RELU_ALPHA,
            dropout_rate: 0.0,
            train_mode: false,
        }
    }
}

/// Multilayer perceptron with leaky-ReLU hidden activations and a linear
/// output layer. Dropout follows every hidden activation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// Allocates layers for `widths = [input, hidden..., output]` with
    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], store: &mut ParamStore, rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                let weight = store.push(Tensor::matrix(fan_in, fan_out, data).expect("sized"));
                let bias = store.push(Tensor::zeros(&[fan_out]));
                Layer {
                    weight,
                    bias,
                    fan_in,
                    fan_out,
                }
            })
            .collect();
        Self { layers }
    }

    /// Wraps layers whose tensors already live in a store.
    pub fn from_layers(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out
    }

    /// Records the forward pass on `tape`. `input` is `[batch, input_width]`.
    pub fn apply<R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        input: Var,
        opts: &MlpOptions,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&opts.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                opts.dropout_rate
            )));
        }
        let mut x = input;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let width = tape.value(x).cols();
            if width != layer.fan_in || tape.value(x).shape().len() != 2 {
                return Err(Error::Dimension {
                    layer: i,
                    expected: layer.fan_in,
                    actual: width,
                });
            }
            let w = tape.param(layer.weight, store.get(layer.weight));
            let b = tape.param(layer.bias, store.get(layer.bias));
            let z = tape.matmul(x, w)?;
            x = tape.add_bias(z, b)?;
            if i < last {
                x = tape.leaky_relu(x, opts.alpha);
                if opts.train_mode && opts.dropout_rate > 0.0 {
                    let keep = 1.0 - opts.dropout_rate;
                    let shape = tape.value(x).shape().to_vec();
                    let n: usize = shape.iter().product();
                    let mask = (0..n)
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    x = tape.mul_const(x, Tensor::new(shape, mask)?)?;
                }
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_layer(store: &mut ParamStore) -> Mlp {
        let weight = store.push(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let bias = store.push(Tensor::zeros(&[2]));
        // A single layer has no hidden activation; wrap with a second
        // identity layer so the activation is applied once.
        let weight2 = store.push(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let bias2 = store.push(Tensor::zeros(&[2]));
        Mlp::from_layers(vec![
            Layer { weight, bias, fan_in: 2, fan_out: 2 },
            Layer { weight: weight2, bias: bias2, fan_in: 2, fan_out: 2 },
        ])
    }

    #[test]
    fn leaky_relu_identity_network() {
        let mut store = ParamStore::new();
        let mlp = identity_layer(&mut store);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = mlp.apply(&store, &mut tape, x, &MlpOptions::default(), &mut rng).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, -0.2]);
    }

    #[test]
    fn zero_dropout_is_mode_independent() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::init(&[3, 5, 2], &mut store, &mut rng);
        let input = Tensor::matrix(2, 3, vec![0.1, 0.2, -0.3, 1.0, -2.0, 0.5]).unwrap();
        let run = |train_mode| {
            let mut tape = Tape::new();
            let x = tape.constant(input.clone());
            let opts = MlpOptions { train_mode, ..MlpOptions::default() };
            let y = mlp.apply(&store, &mut tape, x, &opts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            tape.value(y).clone()
        };
        assert_eq!(run(true), run(false));
    }

    #[test]
    fn width_mismatch_names_layer() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::init(&[3, 4], &mut store, &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        match mlp.apply(&store, &mut tape, x, &MlpOptions::default(), &mut rng) {
            Err(Error::Dimension { layer: 0, expected: 3, actual: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn glorot_bounds_hold() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mlp = Mlp::init(&[10, 30], &mut store, &mut rng);
        let limit = (6.0f64 / 40.0).sqrt();
        let w = store.get(mlp.layers()[0].weight);
        assert!(w.data().iter().all(|v| v.abs() <= limit));
        assert!(store.get(mlp.layers()[0].bias).data().iter().all(|&v| v == 0.0));
    }
}
