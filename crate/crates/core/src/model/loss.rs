use crate::data::Targets;
use crate::error::{Error, Result};
use crate::math::{Tape, Tensor, Var};

/// Tape handles for the pieces of the training objective.
#[derive(Clone, Debug)]
pub struct LossTerms {
    /// `error + beta * sum(kl_means)`.
    pub total: Var,
    /// Batch-mean cross entropy (nats) or squared error.
    pub error: Var,
    /// Batch-mean KL (nats) of each channel.
    pub kl_means: Vec<Var>,
}

fn with_penalty(tape: &mut Tape, error: Var, kl: &[Var], beta: f64) -> Result<LossTerms> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Contract(format!("beta must be finite and non-negative, got {beta}")));
    }
    let kl_means: Vec<Var> = kl.iter().map(|&k| tape.mean(k)).collect();
    let mut total = error;
    for &k in &kl_means {
        let scaled = tape.scale(k, beta);
        total = tape.add(total, scaled)?;
    }
    Ok(LossTerms {
        total,
        error,
        kl_means,
    })
}

/// Mean softmax cross entropy plus `beta` times the summed mean channel KL.
pub fn loss_classification(tape: &mut Tape, logits: Var, classes: &[usize], kl: &[Var], beta: f64) -> Result<LossTerms> {
    let ce = tape.softmax_cross_entropy(logits, classes)?;
    let error = tape.mean(ce);
    with_penalty(tape, error, kl, beta)
}

/// Mean squared error plus `beta` times the summed mean channel KL.
pub fn loss_regression(tape: &mut Tape, prediction: Var, values: &[f64], kl: &[Var], beta: f64) -> Result<LossTerms> {
    let target = Tensor::matrix(values.len(), 1, values.to_vec())?;
    let se = tape.squared_error(prediction, target)?;
    let error = tape.mean(se);
    with_penalty(tape, error, kl, beta)
}

pub fn composite_loss(tape: &mut Tape, prediction: Var, targets: &Targets, kl: &[Var], beta: f64) -> Result<LossTerms> {
    match targets {
        Targets::Classes(c) => loss_classification(tape, prediction, c, kl, beta),
        Targets::Real(v) => loss_regression(tape, prediction, v, kl, beta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_and_prior_channels() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::zeros(&[4, 2]));
        let m = tape.constant(Tensor::zeros(&[4, 3]));
        let kl = tape.gaussian_kl(m, m).unwrap();
        let terms = loss_classification(&mut tape, logits, &[0, 1, 1, 0], &[kl, kl], 5.0).unwrap();
        assert!((tape.value(terms.total).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn penalty_scales_with_beta() {
        let mut tape = Tape::new();
        let pred = tape.constant(Tensor::matrix(2, 1, vec![1.0, 3.0]).unwrap());
        let mean = tape.constant(Tensor::full(&[2, 1], 1.0));
        let lv = tape.constant(Tensor::zeros(&[2, 1]));
        let kl = tape.gaussian_kl(mean, lv).unwrap();
        let terms = loss_regression(&mut tape, pred, &[0.0, 1.0], &[kl], 0.1).unwrap();
        // mse = (1 + 4) / 2, kl = 0.5 per row.
        assert!((tape.value(terms.error).item() - 2.5).abs() < 1e-15);
        assert!((tape.value(terms.total).item() - 2.55).abs() < 1e-15);
    }

    #[test]
    fn negative_beta_is_rejected() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::zeros(&[1, 2]));
        assert!(loss_classification(&mut tape, logits, &[0], &[], -1.0).is_err());
    }
}
