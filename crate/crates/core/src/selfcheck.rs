//! Runtime verification of the numerical core against independent
//! references: finite differences, Monte Carlo, quadrature, and the β
//! schedule endpoints.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::data::Targets;
use crate::error::Result;
use crate::math::{bhattacharyya_coefficient, kl_to_standard_normal, stream_rng, DiagonalGaussian, SeededRng, Tape, Tensor};
use crate::model::{composite_loss, Bottleneck, ChannelNoise, DibModel, ForwardOptions, ModelConfig, PredictionHead};
use crate::training::{beta_schedule, TrainConfig};

pub const GRADIENT_TOLERANCE: f64 = 1e-4;
/// Denominator floor for relative gradient errors, so parameters with
/// vanishing gradients are compared on an absolute scale.
pub const GRADIENT_FLOOR: f64 = 1e-7;
const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Worst relative error between tape gradients and central differences.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub parameters_checked: usize,
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRADIENT_FLOOR)
}

/// Checks every parameter gradient of a two-feature model with encoders
/// `[8, 8]`, channel dimension 2, and decoder `[16]`, for either the
/// classification or the regression objective.
pub fn gradient_check(seed: u64, regression: bool) -> Result<GradientCheck> {
    let mut rng = stream_rng(seed, 0);
    let cfg = ModelConfig {
        embedding_dim: 2,
        encoder_hidden: vec![8, 8],
        decoder_hidden: vec![16],
        bottleneck: Bottleneck::Distributed,
    };
    let head = if regression { PredictionHead::Regression } else { PredictionHead::Classification { classes: 3 } };
    let mut model = DibModel::new(cfg, vec![3, 2], head, &mut rng)?;
    // Non-zero biases so every parameter path is exercised.
    for t in model.params_mut().tensors_mut() {
        for x in t.data_mut() {
            *x += rng.random_range(-0.1..0.1);
        }
    }
    let n = 5;
    let normal = |len: usize, rng: &mut SeededRng| -> Vec<f64> { (0..len).map(|_| rng.sample(StandardNormal)).collect() };
    let features = vec![
        Tensor::matrix(n, 3, normal(n * 3, &mut rng))?,
        Tensor::matrix(n, 2, normal(n * 2, &mut rng))?,
    ];
    let noise = vec![
        Tensor::matrix(n, 2, normal(n * 2, &mut rng))?,
        Tensor::matrix(n, 2, normal(n * 2, &mut rng))?,
    ];
    let targets = if regression {
        Targets::Real(normal(n, &mut rng))
    } else {
        Targets::Classes((0..n).map(|_| rng.random_range(0..3)).collect())
    };
    let beta = 0.3;

    let loss = |m: &DibModel, with_grad: bool| -> Result<(f64, Option<crate::math::Gradients>)> {
        let mut tape = Tape::new();
        let mut unused = stream_rng(0, 0);
        let out = m.forward(&mut tape, &features, &ForwardOptions::eval(), ChannelNoise::Fixed(&noise), &mut unused)?;
        let terms = composite_loss(&mut tape, out.prediction, &targets, &out.kl, beta)?;
        let g = if with_grad { Some(tape.backward(terms.total)?) } else { None };
        Ok((tape.value(terms.total).item(), g))
    };

    let grads = loss(&model, true)?.1.expect("requested");
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for p in 0..model.params().len() {
        let analytic = grads.get(crate::math::ParamId(p)).expect("every parameter").clone();
        for k in 0..analytic.len() {
            let orig = model.params().tensors()[p].data()[k];
            model.params_mut().tensors_mut()[p].data_mut()[k] = orig + FD_STEP;
            let up = loss(&model, false)?.0;
            model.params_mut().tensors_mut()[p].data_mut()[k] = orig - FD_STEP;
            let down = loss(&model, false)?.0;
            model.params_mut().tensors_mut()[p].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic.data()[k], numeric));
            count += 1;
        }
    }
    Ok(GradientCheck {
        max_relative_error: worst,
        parameters_checked: count,
    })
}

/// Random diagonal Gaussian of dimension 1 to 4 with standard-normal means
/// and log-variances uniform in [-2, 2].
pub fn random_gaussian(rng: &mut SeededRng) -> DiagonalGaussian {
    let d = rng.random_range(1..=4);
    let mean = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let lv = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    DiagonalGaussian::new(mean, lv).expect("finite")
}

/// Monte Carlo estimate of `KL(q || N(0, I))` in nats.
pub fn kl_monte_carlo(q: &DiagonalGaussian, samples: usize, rng: &mut SeededRng) -> f64 {
    let sd: Vec<f64> = q.log_variance.iter().map(|l| (0.5 * l).exp()).collect();
    let mut total = 0.0;
    for _ in 0..samples {
        let mut log_ratio = 0.0;
        for k in 0..q.dim() {
            let e: f64 = rng.sample(StandardNormal);
            let z = q.mean[k] + sd[k] * e;
            // log q(z) - log p(z); the 2 pi terms cancel.
            log_ratio += -0.5 * e * e - 0.5 * q.log_variance[k] + 0.5 * z * z;
        }
        total += log_ratio;
    }
    total / samples as f64
}

/// `prod_k integral sqrt(p_k q_k)` by composite Simpson quadrature per
/// dimension.
pub fn bhattacharyya_quadrature(p: &DiagonalGaussian, q: &DiagonalGaussian) -> f64 {
    let density = |x: f64, m: f64, lv: f64| {
        let v = lv.exp();
        (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    };
    let mut bc = 1.0;
    for k in 0..p.dim() {
        let sd = (0.5 * p.log_variance[k].max(q.log_variance[k])).exp();
        let lo = p.mean[k].min(q.mean[k]) - 16.0 * sd;
        let hi = p.mean[k].max(q.mean[k]) + 16.0 * sd;
        let intervals = 40_000;
        let h = (hi - lo) / intervals as f64;
        let f = |x: f64| (density(x, p.mean[k], p.log_variance[k]) * density(x, q.mean[k], q.log_variance[k])).sqrt();
        let mut s = f(lo) + f(hi);
        for i in 1..intervals {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        bc *= s * h / 3.0;
    }
    bc
}

/// Runs every check. `quick` shrinks seed counts and sample sizes.
pub fn run_all(quick: bool) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let seeds = if quick { 3 } else { 20 };
    for (name, regression) in [("gradient/classification", false), ("gradient/regression", true)] {
        let mut worst: f64 = 0.0;
        let mut failure = None;
        for seed in 0..seeds {
            match gradient_check(seed, regression) {
                Ok(g) => worst = worst.max(g.max_relative_error),
                Err(e) => failure = Some(e.to_string()),
            }
        }
        out.push(CheckResult {
            name: name.into(),
            passed: failure.is_none() && worst <= GRADIENT_TOLERANCE,
            detail: failure.unwrap_or_else(|| format!("max relative error {worst:.3e} over {seeds} seeds")),
        });
    }

    let mut rng = stream_rng(7, 0);
    let samples = if quick { 100_000 } else { 1_000_000 };
    let count = if quick { 20 } else { 100 };
    let mut worst_kl: f64 = 0.0;
    for _ in 0..count {
        let q = random_gaussian(&mut rng);
        let exact = kl_to_standard_normal(&q);
        let mc = kl_monte_carlo(&q, samples, &mut rng);
        worst_kl = worst_kl.max((mc - exact).abs() / exact);
    }
    let kl_tol = if quick { 0.05 } else { 0.01 };
    out.push(CheckResult {
        name: "kl/monte-carlo".into(),
        passed: worst_kl <= kl_tol,
        detail: format!("max relative error {worst_kl:.3e} over {count} Gaussians ({samples} samples each)"),
    });

    let mut worst_bc: f64 = 0.0;
    let mut bc_error = None;
    for _ in 0..count {
        let p = random_gaussian(&mut rng);
        let mut q = random_gaussian(&mut rng);
        while q.dim() != p.dim() {
            q = random_gaussian(&mut rng);
        }
        match bhattacharyya_coefficient(&p, &q) {
            Ok(bc) => worst_bc = worst_bc.max((bc - bhattacharyya_quadrature(&p, &q)).abs()),
            Err(e) => bc_error = Some(e.to_string()),
        }
    }
    out.push(CheckResult {
        name: "bhattacharyya/quadrature".into(),
        passed: bc_error.is_none() && worst_bc <= 1e-6,
        detail: bc_error.unwrap_or_else(|| format!("max absolute error {worst_bc:.3e} over {count} pairs")),
    });

    let cfg = TrainConfig::default();
    let first = beta_schedule(0, &cfg);
    let last = beta_schedule(cfg.total_steps(), &cfg);
    out.push(CheckResult {
        name: "schedule/endpoints".into(),
        passed: first == 2e-5 && last == 2.0,
        detail: format!("beta starts at {first:e} and ends at {last:e}"),
    });
    out
}
