use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use rand::Rng;

use crate::model::{frames_to_chw, AgentModel, ObsBatch};
use crate::nn::Real;
use crate::vec_env::{EpisodeSummary, VecEnv};
use crate::{Error, Result};

/// Transitions for one update, indexed `t * num_envs + env`. Frames are
/// stored in encoder layout (`[stack*3, H, W]` per transition).
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub horizon: usize,
    pub frame_len: usize,
    pub game_state_dims: usize,
    pub frames: Vec<f32>,
    pub game_state: Vec<f32>,
    pub actions: Vec<[usize; 3]>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of each environment's state after the last step.
    pub bootstrap_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(num_envs: usize, horizon: usize, frame_len: usize, game_state_dims: usize) -> Self {
        let n = num_envs * horizon;
        RolloutBuffer {
            num_envs,
            horizon,
            frame_len,
            game_state_dims,
            frames: Vec::with_capacity(n * frame_len),
            game_state: Vec::with_capacity(n * game_state_dims),
            actions: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            bootstrap_values: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.num_envs * self.horizon
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.len() == self.capacity() && self.bootstrap_values.len() == self.num_envs
    }

    fn require_complete(&self) -> Result<()> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(Error::usage(format!(
                "rollout buffer holds {} of {} transitions and {} of {} bootstrap values",
                self.len(),
                self.capacity(),
                self.bootstrap_values.len(),
                self.num_envs
            )))
        }
    }
}

/// Backward GAE recursion over `[horizon, num_envs]` arrays.
///
/// `delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t` and
/// `A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}`, where `V_horizon` is the
/// bootstrap value. Returns `(advantages, returns)`.
#[allow(clippy::too_many_arguments)]
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: &[f64],
    num_envs: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let horizon = n / num_envs;
    let mut adv = vec![0.0; n];
    for e in 0..num_envs {
        let mut next_adv = 0.0;
        let mut next_value = bootstrap[e];
        for t in (0..horizon).rev() {
            let i = t * num_envs + e;
            let live = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * next_value * live - values[i];
            next_adv = delta + gamma * lambda * live * next_adv;
            adv[i] = next_adv;
            next_value = values[i];
        }
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Independent reference for [`gae`]: `A_t = sum_k (gamma lambda)^k delta_{t+k}`,
/// truncated after the first done.
pub fn gae_oracle(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: &[f64],
    num_envs: usize,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let horizon = rewards.len() / num_envs;
    let value_at = |t: usize, e: usize| if t == horizon { bootstrap[e] } else { values[t * num_envs + e] };
    let delta = |t: usize, e: usize| {
        let i = t * num_envs + e;
        let next = if dones[i] { 0.0 } else { value_at(t + 1, e) };
        rewards[i] + gamma * next - values[i]
    };
    let mut out = vec![0.0; rewards.len()];
    for e in 0..num_envs {
        for t in 0..horizon {
            let mut sum = 0.0;
            for k in 0..horizon - t {
                sum += Float::powi(gamma * lambda, k as i32) * delta(t + k, e);
                if dones[(t + k) * num_envs + e] {
                    break;
                }
            }
            out[t * num_envs + e] = sum;
        }
    }
    out
}

/// Fills `advantages` and `returns`.
pub fn compute_gae(buffer: &mut RolloutBuffer, gamma: f64, lambda: f64) -> Result<()> {
    buffer.require_complete()?;
    let (adv, ret) = gae(
        &buffer.rewards,
        &buffer.values,
        &buffer.dones,
        &buffer.bootstrap_values,
        buffer.num_envs,
        gamma,
        lambda,
    );
    buffer.advantages = adv;
    buffer.returns = ret;
    Ok(())
}

/// A collected rollout and the episodes that finished during it.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub buffer: RolloutBuffer,
    pub episodes: Vec<EpisodeSummary>,
}

/// Runs `horizon` lockstep steps with actions sampled from `model`.
pub fn collect_rollout<R: Real, G: Rng + ?Sized>(
    model: &mut AgentModel<R>,
    envs: &mut VecEnv,
    horizon: usize,
    rng: &mut G,
) -> Result<Rollout> {
    let cfg = model.config().clone();
    let n = envs.num_envs();
    let frame_len = cfg.frame_len();
    let mut buffer = RolloutBuffer::new(n, horizon, frame_len, cfg.game_state_dims);
    let mut episodes = Vec::new();
    for _ in 0..horizon {
        let observations: Vec<_> = envs.observations().iter().collect();
        let batch = ObsBatch::<R>::from_observations(&observations, &cfg)?;
        let acted = model.act_batch(&batch, rng)?;
        for obs in &observations {
            let start = buffer.frames.len();
            buffer.frames.resize(start + frame_len, 0.0);
            frames_to_chw(
                &obs.frames,
                cfg.stacked_frames,
                cfg.frame_height,
                cfg.frame_width,
                cfg.color_channels,
                &mut buffer.frames[start..],
            );
            buffer.game_state.extend_from_slice(&obs.game_state);
        }
        let step = envs.step(&acted.actions)?;
        buffer.actions.extend(acted.actions.iter().map(|a| a.indices()));
        buffer.log_probs.extend_from_slice(&acted.log_probs);
        buffer.values.extend_from_slice(&acted.values);
        buffer.rewards.extend_from_slice(&step.rewards);
        buffer.dones.extend_from_slice(&step.dones);
        episodes.extend(step.infos.into_iter().flatten());
    }
    let observations: Vec<_> = envs.observations().iter().collect();
    let batch = ObsBatch::<R>::from_observations(&observations, &cfg)?;
    let out = model.forward(&batch)?;
    buffer.bootstrap_values = out.values.iter().map(|v| v.f64()).collect();
    Ok(Rollout { buffer, episodes })
}
