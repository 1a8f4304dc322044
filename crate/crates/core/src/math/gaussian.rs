use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-variances are clamped into `[-LOG_VAR_LIMIT, LOG_VAR_LIMIT]` before
/// exponentiation.
pub const LOG_VAR_LIMIT: f64 = 10.0;

/// Axis-aligned Gaussian over the channel space of one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGaussian {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl DiagonalGaussian {
    /// Builds a Gaussian, clamping the log-variances.
    pub fn new(mean: Vec<f64>, log_variance: Vec<f64>) -> Result<Self> {
        if mean.len() != log_variance.len() {
            return Err(Error::Shape(format!(
                "gaussian with {} means and {} log-variances",
                mean.len(),
                log_variance.len()
            )));
        }
        if mean.iter().chain(&log_variance).any(|v| !v.is_finite()) {
            return Err(Error::Contract("gaussian parameters must be finite".into()));
        }
        let log_variance = log_variance
            .into_iter()
            .map(|l| l.clamp(-LOG_VAR_LIMIT, LOG_VAR_LIMIT))
            .collect();
        Ok(Self { mean, log_variance })
    }

    /// The standard normal prior in `dim` dimensions.
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_variance: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_variance.iter().map(|l| l.exp()).collect()
    }
}

pub(crate) fn kl_terms(mean: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mean
        .iter()
        .zip(log_var)
        .map(|(m, l)| m * m + l.exp() - 1.0 - l)
        .sum::<f64>()
}

/// KL divergence in nats from `g` to the standard normal.
pub fn kl_to_standard_normal(g: &DiagonalGaussian) -> f64 {
    kl_terms(&g.mean, &g.log_variance)
}

/// Draws `mean + sigma * eps` for a given standard-normal `eps`.
pub fn reparameterize(g: &DiagonalGaussian, eps: &[f64]) -> Result<Vec<f64>> {
    if eps.len() != g.dim() {
        return Err(Error::Shape(format!(
            "noise of length {} for a {}-dimensional gaussian",
            eps.len(),
            g.dim()
        )));
    }
    Ok(g.mean
        .iter()
        .zip(&g.log_variance)
        .zip(eps)
        .map(|((m, l), e)| m + (0.5 * l).exp() * e)
        .collect())
}

/// Bhattacharyya distance between two diagonal Gaussians.
///
/// Per dimension: `(m1 - m2)^2 / (4 (v1 + v2)) + ln cosh((l1 - l2) / 2) / 2`,
/// which is the usual `ln(((v1 + v2) / 2) / sqrt(v1 v2)) / 2` written in
/// terms of log-variances so that it is exactly symmetric and exactly zero
/// for identical arguments.
pub fn bhattacharyya_distance(a: &DiagonalGaussian, b: &DiagonalGaussian) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "bhattacharyya between dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut dist = 0.0;
    for j in 0..a.dim() {
        let (m1, m2) = (a.mean[j], b.mean[j]);
        let (l1, l2) = (a.log_variance[j], b.log_variance[j]);
        let dm = m1 - m2;
        dist += dm * dm / (4.0 * (l1.exp() + l2.exp()));
        dist += 0.5 * ln_cosh(0.5 * (l1 - l2));
    }
    Ok(dist)
}

/// Bhattacharyya coefficient `exp(-D_B)` in `[0, 1]`.
pub fn bhattacharyya_coefficient(a: &DiagonalGaussian, b: &DiagonalGaussian) -> Result<f64> {
    Ok((-bhattacharyya_distance(a, b)?).exp().clamp(0.0, 1.0))
}

fn ln_cosh(x: f64) -> f64 {
    let x = x.abs();
    // ln cosh x = x + ln(1 + e^{-2x}) - ln 2, stable for large x.
    x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2
}
