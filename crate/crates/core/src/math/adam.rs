use super::tape::{Gradients, ParamId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Adam with bias correction. Parameter `i` is addressed as `ParamId(i)`.
#[derive(Clone, Debug)]
pub struct AdamState {
    step: u64,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Tensor], learning_rate: f64) -> Self {
        Self {
            step: 0,
            learning_rate,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
            first_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn first_moment(&self, id: ParamId) -> &Tensor {
        &self.first_moment[id.0]
    }

    pub fn second_moment(&self, id: ParamId) -> &Tensor {
        &self.second_moment[id.0]
    }

    /// Applies one update. Nothing is modified if any gradient is missing,
    /// misshapen, or non-finite.
    pub fn step(&mut self, params: &mut [Tensor], grads: &Gradients) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            let g = grads
                .get(ParamId(i))
                .ok_or_else(|| Error::Contract(format!("missing gradient for parameter {i}")))?;
            if g.shape() != p.shape() {
                return Err(Error::Shape(format!(
                    "gradient {:?} for parameter {i} of shape {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient { param: i });
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let step_size = self.learning_rate / bc1;
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads.get(ParamId(i)).expect("checked above");
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (((pj, &gj), mj), vj) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mj = self.beta1 * *mj + (1.0 - self.beta1) * gj;
                *vj = self.beta2 * *vj + (1.0 - self.beta2) * gj * gj;
                *pj -= step_size * *mj / ((*vj / bc2).sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::tape::Tape;

    fn grads_for(values: &[Tensor]) -> Gradients {
        // Build a Gradients map through the tape: loss = sum(p * g).
        let mut tape = Tape::new();
        let mut terms = Vec::new();
        for (i, g) in values.iter().enumerate() {
            let p = tape.param(ParamId(i), &Tensor::zeros(g.shape()));
            let c = tape.mul_const(p, g.clone()).unwrap();
            terms.push(tape.sum(c));
        }
        let mut loss = terms[0];
        for &t in &terms[1..] {
            loss = tape.add(loss, t).unwrap();
        }
        tape.backward(loss).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = vec![Tensor::vector(vec![1.0])];
        let mut adam = AdamState::new(&params, 3e-4);
        adam.step(&mut params, &grads_for(&[Tensor::vector(vec![1.0])])).unwrap();
        // m_hat = 1, v_hat = 1 -> delta = lr / (1 + eps)
        let expected = 1.0 - 3e-4 / (1.0 + 1e-8);
        assert!((params[0].data()[0] - expected).abs() < 1e-15);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point_and_moments_decay() {
        let mut params = vec![Tensor::vector(vec![0.5, -0.5])];
        let mut adam = AdamState::new(&params, 1e-2);
        adam.step(&mut params, &grads_for(&[Tensor::vector(vec![1.0, 1.0])])).unwrap();
        let after_one = params[0].clone();
        let m1 = adam.first_moment(ParamId(0)).data()[0];
        let zero = grads_for(&[Tensor::vector(vec![0.0, 0.0])]);
        adam.step(&mut params, &zero).unwrap();
        let m2 = adam.first_moment(ParamId(0)).data()[0];
        assert!(m2.abs() < m1.abs());
        // Moment decay alone still nudges the parameter, but with zero
        // moments from the start nothing moves.
        let mut fresh = vec![after_one.clone()];
        let mut adam2 = AdamState::new(&fresh, 1e-2);
        adam2.step(&mut fresh, &zero).unwrap();
        assert_eq!(fresh[0], after_one);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut params = vec![Tensor::vector(vec![0.0]), Tensor::vector(vec![0.0])];
        let mut adam = AdamState::new(&params, 1e-3);
        let g = grads_for(&[Tensor::vector(vec![0.0]), Tensor::vector(vec![f64::NAN])]);
        match adam.step(&mut params, &g) {
            Err(Error::NonFiniteGradient { param }) => assert_eq!(param, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn identical_gradient_sequences_give_identical_trajectories() {
        let run = || {
            let mut params = vec![Tensor::vector(vec![0.1, 0.2, 0.3])];
            let mut adam = AdamState::new(&params, 1e-3);
            for k in 0..20 {
                let g = Tensor::vector(vec![(k as f64).sin(), 0.5, -(k as f64) * 0.1]);
                adam.step(&mut params, &grads_for(&[g])).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }
}
