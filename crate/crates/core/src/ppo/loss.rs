use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use super::RolloutBuffer;
use crate::model::{AgentModel, ModelConfig, ObsBatch};
use crate::nn::{Real, Tensor};
use crate::{Error, Result};

const ADVANTAGE_STD_EPSILON: f64 = 1e-8;

/// Transitions selected from a [`RolloutBuffer`] for one gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch<R> {
    pub obs: ObsBatch<R>,
    pub actions: Vec<[usize; 3]>,
    pub old_log_probs: Vec<f64>,
    pub old_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl<R: Real> Minibatch<R> {
    pub fn gather(buffer: &RolloutBuffer, indices: &[usize], config: &ModelConfig) -> Result<Self> {
        if buffer.advantages.len() != buffer.len() {
            return Err(Error::usage("minibatch requested before advantages were computed"));
        }
        let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Minibatch {
            obs: ObsBatch::gather(&buffer.frames, &buffer.game_state, indices, config)?,
            actions: indices.iter().map(|&i| buffer.actions[i]).collect(),
            old_log_probs: pick(&buffer.log_probs),
            old_values: pick(&buffer.values),
            advantages: pick(&buffer.advantages),
            returns: pick(&buffer.returns),
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Per-sample clipped surrogate `min(rho A, clip(rho, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Advantages shifted to mean 0 and scaled to standard deviation 1.
pub fn normalize(advantages: &[f64]) -> Vec<f64> {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = Float::sqrt(var);
    advantages.iter().map(|a| (a - mean) / (std + ADVANTAGE_STD_EPSILON)).collect()
}

/// Evaluates the PPO loss on `mb` and accumulates its gradient into the
/// model's grad slots (which the caller zeroes).
///
/// `loss = policy + value_coef * value - entropy_coef * entropy` with the
/// clipped surrogate policy term, the clipped value term and the mean
/// branch entropy.
pub fn ppo_loss<R: Real>(
    model: &mut AgentModel<R>,
    mb: &Minibatch<R>,
    clip_range: f64,
    value_coef: f64,
    entropy_coef: f64,
    normalize_advantages: bool,
) -> Result<LossStats> {
    let n = mb.len();
    if n == 0 {
        return Err(Error::usage("empty minibatch"));
    }
    let ev = model.evaluate(&mb.obs, &mb.actions)?;
    let adv = if normalize_advantages { normalize(&mb.advantages) } else { mb.advantages.clone() };
    let inv_n = 1.0 / n as f64;
    let branches = model.config().branch_sizes.clone();
    let nb = branches.len() as f64;

    let mut policy_loss = 0.0;
    let mut value_loss = 0.0;
    let mut entropy = 0.0;
    let mut clipped = 0usize;
    let mut approx_kl = 0.0;
    let mut d_logp = Vec::with_capacity(n);
    let mut d_value = Vec::with_capacity(n);
    for i in 0..n {
        let log_ratio = ev.log_probs[i].f64() - mb.old_log_probs[i];
        let ratio = Float::exp(log_ratio);
        let a = adv[i];
        let unclipped = ratio * a;
        let surrogate = clipped_surrogate(ratio, a, clip_range);
        policy_loss -= surrogate * inv_n;
        d_logp.push(if unclipped <= surrogate { -a * ratio * inv_n } else { 0.0 });
        if (ratio - 1.0).abs() > clip_range {
            clipped += 1;
        }
        approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;

        let v = ev.values[i].f64();
        let (v_old, ret) = (mb.old_values[i], mb.returns[i]);
        let plain = (v - ret) * (v - ret);
        let v_clipped = v_old + (v - v_old).clamp(-clip_range, clip_range);
        let bounded = (v_clipped - ret) * (v_clipped - ret);
        value_loss += plain.max(bounded) * inv_n;
        d_value.push(if plain >= bounded { value_coef * 2.0 * (v - ret) * inv_n } else { 0.0 });

        entropy += ev.entropies[i].f64() * inv_n;
    }

    // d/dlogit_j of log p_a is (1[j = a] - p_j); of branch entropy H it is
    // -p_j (log p_j + H).
    let mut grad_logits = Vec::with_capacity(branches.len());
    for (b, &k) in branches.iter().enumerate() {
        let probs = &ev.probs[b];
        let logs = &ev.log_probs_full[b];
        let mut g = Vec::with_capacity(n * k);
        for i in 0..n {
            let row_p = &probs[i * k..(i + 1) * k];
            let row_l = &logs[i * k..(i + 1) * k];
            let h: f64 = -row_p.iter().zip(row_l).map(|(p, l)| p.f64() * l.f64()).sum::<f64>();
            let a = mb.actions[i][b];
            for j in 0..k {
                let p = row_p[j].f64();
                let onehot = if j == a { 1.0 } else { 0.0 };
                let d_entropy = -p * (row_l[j].f64() + h) / nb * inv_n;
                g.push(R::of(d_logp[i] * (onehot - p) - entropy_coef * d_entropy));
            }
        }
        grad_logits.push(Tensor::new(alloc::vec![n, k], g)?);
    }
    let grad_values: Vec<R> = d_value.iter().map(|&d| R::of(d)).collect();

    let loss = policy_loss + value_coef * value_loss - entropy_coef * entropy;
    if !loss.is_finite() {
        return Err(Error::training(format!(
            "non-finite loss (policy {policy_loss}, value {value_loss}, entropy {entropy})"
        )));
    }
    model.backward(&grad_logits, &grad_values)?;
    Ok(LossStats {
        loss,
        policy_loss,
        value_loss,
        entropy,
        clip_fraction: clipped as f64 * inv_n,
        approx_kl,
    })
}
