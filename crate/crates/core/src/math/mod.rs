//! Dense tensors, reverse-mode gradients, Gaussian channel primitives,
//! losses, and the Adam optimizer.

pub mod adam;
pub mod gaussian;
pub mod loss;
pub mod mlp;
pub mod tape;
pub mod tensor;

pub use adam::AdamState;
pub use gaussian::{
    bhattacharyya_coefficient, bhattacharyya_distance, kl_to_standard_normal, reparameterize,
    DiagonalGaussian, LOG_VAR_LIMIT,
};
pub use loss::{log_sum_exp, mse, softmax, softmax_cross_entropy};
pub use mlp::{Layer, Mlp, MlpOptions, ParamStore, LEAKY_RELU_ALPHA};
pub use tape::{Gradients, ParamId, Tape, Var};
pub use tensor::Tensor;

/// Seeded generator used for every stochastic step in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Information quantities are computed in nats and exported in bits.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// Independent generator number `stream` derived from one run seed.
pub fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = <SeededRng as rand::SeedableRng>::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
