//! Action distributions: categorical over logits and tanh-squashed
//! diagonal Gaussians, each with a numeric path (sampling, log-probs)
//! and a graph path for differentiable losses.

use crate::autodiff::{GradError, Tape, Tensor, Var};
use rand::Rng;
use thiserror::Error;

/// Additive floor inside the tanh Jacobian log term `log(1 - a^2 + EPS)`.
pub const JACOBIAN_EPS: f64 = 1e-6;
/// Pre-squash values are clamped to this magnitude when inverting tanh.
pub const ATANH_LIMIT: f64 = 15.0;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("standard deviation must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("tanh-squashed action component {0} is outside (-1, 1)")]
    ActionOutOfRange(f64),
    #[error(transparent)]
    Grad(#[from] GradError),
}

/// One standard normal draw via Box-Muller (two uniforms per draw, the sine
/// half discarded).  Hand-rolled so sampled noise depends only on the
/// uniform stream, keeping runs bit-reproducible.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]: keeps ln away from 0
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Stable log-softmax of a logit vector.
pub fn log_softmax_vec(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|v| v - lse).collect()
}

/// Inverse-CDF sample: the smallest index whose cumulative softmax mass
/// exceeds `u`.  `u` must lie in `[0, 1)`.
pub fn categorical_sample(logits: &[f64], u: f64) -> usize {
    debug_assert!(!logits.is_empty());
    debug_assert!((0.0..1.0).contains(&u));
    let lsm = log_softmax_vec(logits);
    let mut cum = 0.0;
    for (k, lp) in lsm.iter().enumerate() {
        cum += lp.exp();
        if u < cum {
            return k;
        }
    }
    logits.len() - 1
}

/// Entropy of the categorical distribution implied by `logits`, in nats.
pub fn categorical_entropy(logits: &[f64]) -> f64 {
    let lsm = log_softmax_vec(logits);
    -lsm.iter().map(|lp| lp.exp() * lp).sum::<f64>()
}

/// Graph version of [`categorical_entropy`], summed over all rows of a
/// `[K]` or `[rows, K]` logit tensor.
pub fn categorical_entropy_graph(tape: &mut Tape, logits: Var) -> Result<Var, GradError> {
    let lsm = tape.log_softmax(logits)?;
    let p = tape.exp(lsm);
    let plp = tape.mul(p, lsm)?;
    let s = tape.sum(plp);
    Ok(tape.mul_scalar(s, -1.0))
}

/// A tanh-squashed Gaussian sample `a = tanh(mu + sigma * xi)` and its log
/// density, which includes the change-of-variables correction
/// `-log(1 - a^2 + EPS)` per component.
pub fn tanh_gaussian_sample(
    mu: &[f64],
    sigma: &[f64],
    xi: &[f64],
) -> Result<(Vec<f64>, f64), DistError> {
    if mu.len() != sigma.len() || mu.len() != xi.len() {
        return Err(DistError::Dimension {
            expected: mu.len(),
            got: sigma.len().max(xi.len()),
        });
    }
    let mut action = Vec::with_capacity(mu.len());
    let mut log_prob = 0.0;
    for i in 0..mu.len() {
        let s = sigma[i];
        if !(s > 0.0 && s.is_finite()) {
            return Err(DistError::BadSigma(s));
        }
        let u = mu[i] + s * xi[i];
        let a = u.tanh();
        // With u = mu + sigma * xi the Gaussian exponent reduces to xi^2 / 2.
        log_prob += -s.ln() - 0.5 * LN_2PI - 0.5 * xi[i] * xi[i];
        log_prob -= (1.0 - a * a + JACOBIAN_EPS).ln();
        action.push(a);
    }
    Ok((action, log_prob))
}

/// Log density of an already-squashed action under the tanh Gaussian,
/// recovered by inverting the squash (clamped to [`ATANH_LIMIT`]).
pub fn tanh_gaussian_log_prob(a: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64, DistError> {
    if a.len() != mu.len() || a.len() != sigma.len() {
        return Err(DistError::Dimension {
            expected: a.len(),
            got: mu.len().max(sigma.len()),
        });
    }
    let mut log_prob = 0.0;
    for i in 0..a.len() {
        let s = sigma[i];
        if !(s > 0.0 && s.is_finite()) {
            return Err(DistError::BadSigma(s));
        }
        if !(a[i] > -1.0 && a[i] < 1.0) {
            return Err(DistError::ActionOutOfRange(a[i]));
        }
        let u = a[i].atanh().clamp(-ATANH_LIMIT, ATANH_LIMIT);
        let z = (u - mu[i]) / s;
        log_prob += -s.ln() - 0.5 * LN_2PI - 0.5 * z * z;
        log_prob -= (1.0 - a[i] * a[i] + JACOBIAN_EPS).ln();
    }
    Ok(log_prob)
}

/// Differentiable tanh-Gaussian sample built on a tape.
pub struct TanhSampleGraph {
    /// Squashed actions, same shape as `mu`.
    pub action: Var,
    /// Scalar sum of the log densities over every row and component.
    pub log_prob_sum: Var,
}

/// Builds `a = tanh(mu + exp(log_std) * xi)` and the summed log density on
/// the tape, reparameterized through `mu` and `log_std`.  `xi` holds
/// pre-drawn standard normal noise matching the shape of `mu`.
pub fn tanh_gaussian_sample_graph(
    tape: &mut Tape,
    mu: Var,
    log_std: Var,
    xi: &Tensor,
) -> Result<TanhSampleGraph, GradError> {
    let noise = tape.constant(xi.clone());
    let sigma = tape.exp(log_std);
    let scaled = tape.mul(sigma, noise)?;
    let u = tape.add(mu, scaled)?;
    let action = tape.tanh(u);

    // log N(u; mu, sigma) with u = mu + sigma * xi collapses to
    // -log sigma - 0.5 log 2 pi - xi^2 / 2, so only the -log sigma term
    // carries gradient; the rest is a constant per sample.
    let n = xi.numel() as f64;
    let xi_sq: f64 = xi.data().iter().map(|v| v * v).sum();
    let gauss_const = -0.5 * LN_2PI * n - 0.5 * xi_sq;

    let a_sq = tape.square(action);
    let neg_a_sq = tape.mul_scalar(a_sq, -1.0);
    let one_minus = tape.add_scalar(neg_a_sq, 1.0 + JACOBIAN_EPS);
    let log_jac = tape.log(one_minus);
    let jac_sum = tape.sum(log_jac);

    let log_sigma_sum = tape.sum(log_std);
    let neg_log_sigma = tape.mul_scalar(log_sigma_sum, -1.0);
    let without_const = tape.sub(neg_log_sigma, jac_sum)?;
    let log_prob_sum = tape.add_scalar(without_const, gauss_const);
    Ok(TanhSampleGraph {
        action,
        log_prob_sum,
    })
}
