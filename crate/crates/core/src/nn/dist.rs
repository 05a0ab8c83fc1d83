//! Categorical distributions over logits.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, RngExt};

use super::Real;
use crate::{Error, Result};

/// Tolerance on `sum(probs) == 1` for sampling inputs.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Max-subtracted softmax.
pub fn softmax<R: Real>(logits: &[R]) -> Result<Vec<R>> {
    let max = max_logit(logits)?;
    let exps: Vec<R> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: R = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn log_softmax<R: Real>(logits: &[R]) -> Result<Vec<R>> {
    let max = max_logit(logits)?;
    let log_total = logits.iter().map(|&z| (z - max).exp()).sum::<R>().ln() + max;
    Ok(logits.iter().map(|&z| z - log_total).collect())
}

fn max_logit<R: Real>(logits: &[R]) -> Result<R> {
    if logits.is_empty() {
        return Err(Error::usage("softmax of an empty logit vector"));
    }
    Ok(logits.iter().copied().fold(R::neg_infinity(), R::max))
}

pub fn validate_probs<R: Real>(probs: &[R]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::usage("empty probability vector"));
    }
    if probs.iter().any(|&p| !(p >= R::zero()) || !p.is_finite()) {
        return Err(Error::usage(format!("probabilities must be finite and non-negative: {probs:?}")));
    }
    let total: f64 = probs.iter().map(|p| p.f64()).sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::usage(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// Inverse-CDF draw. Consumes exactly one `f64` from `rng`.
pub fn categorical_sample<R: Real, G: Rng + ?Sized>(probs: &[R], rng: &mut G) -> Result<usize> {
    validate_probs(probs)?;
    let u: f64 = rng.random();
    let total: f64 = probs.iter().map(|p| p.f64()).sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.f64();
        if p > 0.0 {
            last_nonzero = i;
            acc += p;
            if target < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_nonzero)
}

/// `-sum p ln p` in nats, with `0 ln 0 = 0`.
pub fn categorical_entropy<R: Real>(probs: &[R]) -> Result<R> {
    validate_probs(probs)?;
    Ok(entropy_unchecked(probs))
}

pub(crate) fn entropy_unchecked<R: Real>(probs: &[R]) -> R {
    -probs
        .iter()
        .filter(|&&p| p > R::zero())
        .map(|&p| p * p.ln())
        .sum::<R>()
}

/// `-sum p * log_p` given matching log-probabilities, as produced by
/// [`log_softmax`].
pub fn entropy_from_logs<R: Real>(probs: &[R], log_probs: &[R]) -> R {
    -probs.iter().zip(log_probs).map(|(&p, &lp)| p * lp).sum::<R>()
}
