//! Clipped PPO with GAE, branch-mean entropy bonus and linear annealing.

mod buffer;
mod loss;
mod trainer;

pub use buffer::{collect_rollout, compute_gae, gae, gae_oracle, Rollout, RolloutBuffer};
pub use loss::{clipped_surrogate, ppo_loss, LossStats, Minibatch};
pub use trainer::{update, vec_env_config, TrainStats, Trainer, TrainerSnapshot, UpdateStats};

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `max(floor, initial * (1 - progress))`.
pub fn linear_anneal(initial: f64, progress: f64, floor: f64) -> f64 {
    let p = progress.clamp(0.0, 1.0);
    (initial * (1.0 - p)).max(floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    /// Initial entropy coefficient.
    pub entropy_coef: f64,
    pub total_updates: u64,
    pub epochs: usize,
    pub num_envs: usize,
    /// Transitions collected per update: the total across environments, or
    /// per environment when `trajectory_per_env` is set.
    pub trajectory_length: usize,
    pub trajectory_per_env: bool,
    pub minibatches: usize,
    /// Initial learning rate.
    pub learning_rate: f64,
    /// Initial clip range, shared by the policy and value objectives.
    pub clip_range: f64,
    /// Lower bound for the annealed learning rate, clip range and entropy
    /// coefficient, as a fraction of each one's initial value.
    pub anneal_floor: f64,
    pub normalize_advantages: bool,
    /// Global gradient-norm bound; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig::paper()
    }
}

impl PpoConfig {
    /// The original hyperparameters: 16 environments, 8192 transitions per
    /// update in total (512 per environment).
    pub fn paper() -> Self {
        PpoConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.01,
            total_updates: 50_000,
            epochs: 4,
            num_envs: 16,
            trajectory_length: 8192,
            trajectory_per_env: false,
            minibatches: 4,
            learning_rate: 3.25e-4,
            clip_range: 0.2,
            anneal_floor: 0.0,
            normalize_advantages: true,
            max_grad_norm: None,
        }
    }

    /// 2 environments x 128 steps, 2000 updates, raw advantages. With one
    /// episode per batch most rollouts carry no reward, and normalizing
    /// their advantages turns value noise into full-size policy steps.
    pub fn desk() -> Self {
        PpoConfig { total_updates: 2000, num_envs: 2, trajectory_length: 256, normalize_advantages: false, ..PpoConfig::paper() }
    }

    /// Steps collected per environment per update.
    pub fn horizon(&self) -> usize {
        if self.trajectory_per_env {
            self.trajectory_length
        } else {
            self.trajectory_length / self.num_envs.max(1)
        }
    }

    pub fn batch_size(&self) -> usize {
        self.horizon() * self.num_envs
    }

    pub fn minibatch_size(&self) -> usize {
        self.batch_size() / self.minibatches.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!("ppo.{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("gae_lambda", self.gae_lambda)?;
        if self.num_envs == 0 || self.epochs == 0 || self.minibatches == 0 || self.total_updates == 0 {
            return Err(Error::config("ppo.num_envs, epochs, minibatches and total_updates must be positive"));
        }
        if !self.trajectory_per_env && self.trajectory_length % self.num_envs != 0 {
            return Err(Error::config(format!(
                "ppo.trajectory_length {} is not divisible by num_envs {}",
                self.trajectory_length, self.num_envs
            )));
        }
        if self.horizon() == 0 {
            return Err(Error::config("ppo.trajectory_length gives an empty rollout"));
        }
        if self.batch_size() % self.minibatches != 0 {
            return Err(Error::config(format!(
                "ppo.minibatches {} does not divide the batch of {} transitions",
                self.minibatches,
                self.batch_size()
            )));
        }
        if !(self.anneal_floor >= 0.0) {
            return Err(Error::config(format!("ppo.anneal_floor must be >= 0, got {}", self.anneal_floor)));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("clip_range", self.clip_range),
            ("entropy_coef", self.entropy_coef),
            ("value_coef", self.value_coef),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("ppo.{name} must be a finite non-negative number, got {v}")));
            }
        }
        if let Some(g) = self.max_grad_norm {
            if !(g > 0.0) {
                return Err(Error::config(format!("ppo.max_grad_norm must be positive, got {g}")));
            }
        }
        Ok(())
    }

    /// `(learning rate, clip range, entropy coefficient)` at `progress`.
    pub fn annealed(&self, progress: f64) -> (f64, f64, f64) {
        let f = self.anneal_floor;
        (
            linear_anneal(self.learning_rate, progress, f * self.learning_rate),
            linear_anneal(self.clip_range, progress, f * self.clip_range),
            linear_anneal(self.entropy_coef, progress, f * self.entropy_coef),
        )
    }
}
