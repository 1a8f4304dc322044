use crate::error::{Error, Result};

/// `ln sum exp(x)`, shifted by the maximum for stability.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Cross entropy in nats of a softmax over `logits` against `target`.
pub fn softmax_cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::Contract(format!(
            "target class {target} out of range for {} classes",
            logits.len()
        )));
    }
    Ok((log_sum_exp(logits) - logits[target]).max(0.0))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| (l - lse).exp()).collect()
}

/// Mean of squared differences over all elements.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "mse of {} predictions against {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(ss / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        for k in [2usize, 3, 10] {
            let ce = softmax_cross_entropy(&vec![0.7; k], 0).unwrap();
            assert!((ce - (k as f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_logits_do_not_overflow() {
        let ce = softmax_cross_entropy(&[30.0, -30.0], 0).unwrap();
        assert!(ce.is_finite() && ce < 1e-25);
        let ce = softmax_cross_entropy(&[1000.0, -1000.0], 1).unwrap();
        assert!((ce - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn bad_class_index_is_a_contract_error() {
        assert!(matches!(softmax_cross_entropy(&[0.0, 1.0], 2), Err(Error::Contract(_))));
    }

    #[test]
    fn mse_basic_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(mse(&[0.0], &[1.0, 1.0]).is_err());
    }
}
