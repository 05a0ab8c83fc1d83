use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{collect_rollout, compute_gae, ppo_loss, Minibatch, PpoConfig, RolloutBuffer};
use crate::env::{EnvConfig, Theme};
use crate::model::{AgentModel, ModelConfig};
use crate::nn::{clip_grad_norm, AdamState, Real};
use crate::rng::{derive_seed, stream, RngState, StreamRng};
use crate::vec_env::{EpisodeSummary, VecEnv, VecEnvConfig, VecEnvSnapshot};
use crate::{Error, Result};

/// The environment batch a [`Trainer`] with these settings runs.
pub fn vec_env_config(config: &PpoConfig, seed_pool: &[u64], theme_pool: &[Theme], master_seed: u64) -> VecEnvConfig {
    VecEnvConfig {
        num_envs: config.num_envs,
        seed_pool: seed_pool.to_vec(),
        theme_pool: theme_pool.to_vec(),
        base_rng_seed: derive_seed(master_seed, "vec-env", 0),
    }
}

/// Averages over the minibatch steps of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub minibatch_steps: usize,
}

/// Runs `epochs` passes of shuffled minibatch Adam steps over `buffer`.
#[allow(clippy::too_many_arguments)]
pub fn update<R: Real, G: Rng + ?Sized>(
    model: &mut AgentModel<R>,
    adam: &mut AdamState<R>,
    buffer: &RolloutBuffer,
    config: &PpoConfig,
    progress: f64,
    rng: &mut G,
) -> Result<UpdateStats> {
    if buffer.advantages.len() != buffer.capacity() || !buffer.is_complete() {
        return Err(Error::usage("update needs a complete buffer with advantages"));
    }
    let (lr, clip, ent) = config.annealed(progress);
    let n = buffer.len();
    if n % config.minibatches != 0 {
        return Err(Error::config(format!("{} minibatches do not divide {n} transitions", config.minibatches)));
    }
    let size = n / config.minibatches;
    let model_cfg = model.config().clone();
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks_exact(size) {
            let mb = Minibatch::<R>::gather(buffer, chunk, &model_cfg)?;
            model.zero_grad();
            let s = ppo_loss(model, &mb, clip, config.value_coef, ent, config.normalize_advantages)?;
            let mut params = model.params_mut();
            if let Some(max) = config.max_grad_norm {
                clip_grad_norm(&mut params, max);
            }
            adam.step(&mut params, lr)?;
            if !model.all_finite() {
                return Err(Error::training("non-finite parameter after an optimizer step"));
            }
            stats.policy_loss += s.policy_loss;
            stats.value_loss += s.value_loss;
            stats.entropy += s.entropy;
            stats.clip_fraction += s.clip_fraction;
            stats.approx_kl += s.approx_kl;
            stats.minibatch_steps += 1;
        }
    }
    let k = stats.minibatch_steps as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    stats.approx_kl /= k;
    Ok(stats)
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    /// 1-based update number.
    pub update: u64,
    pub env_steps: u64,
    pub lr: f64,
    pub clip_range: f64,
    pub entropy_coef: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Episodes that finished during this update's rollout.
    pub episodes: usize,
    pub mean_return: Option<f64>,
    pub mean_length: Option<f64>,
    pub mean_floor: Option<f64>,
}

/// Everything needed to continue a run bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerSnapshot {
    pub updates_done: u64,
    pub env_steps: u64,
    pub params: Vec<(String, Vec<usize>, Vec<f64>)>,
    pub adam_step: u64,
    pub adam_first: Vec<Vec<f64>>,
    pub adam_second: Vec<Vec<f64>>,
    pub envs: VecEnvSnapshot,
    pub act_rng: RngState,
    pub shuffle_rng: RngState,
}

#[derive(Debug, Clone)]
pub struct Trainer<R> {
    config: PpoConfig,
    vec_config: VecEnvConfig,
    model: AgentModel<R>,
    adam: AdamState<R>,
    envs: VecEnv,
    act_rng: StreamRng,
    shuffle_rng: StreamRng,
    updates_done: u64,
    env_steps: u64,
}

impl<R: Real> Trainer<R> {
    /// Fresh run. All randomness derives from `master_seed`.
    pub fn new(
        config: &PpoConfig,
        model_config: &ModelConfig,
        env_config: &EnvConfig,
        seed_pool: &[u64],
        theme_pool: &[Theme],
        master_seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let vec_config = vec_env_config(config, seed_pool, theme_pool, master_seed);
        if model_config.frame_height != env_config.frame_height
            || model_config.frame_width != env_config.frame_width
            || model_config.stacked_frames != env_config.stacked_frames
        {
            return Err(Error::config(format!(
                "model expects {}x{} frames stacked {}, environment renders {}x{} stacked {}",
                model_config.frame_height,
                model_config.frame_width,
                model_config.stacked_frames,
                env_config.frame_height,
                env_config.frame_width,
                env_config.stacked_frames
            )));
        }
        let model = AgentModel::new(model_config, &mut stream(master_seed, "model-init", 0))?;
        let lens: Vec<usize> = model.named_params().iter().map(|(_, t)| t.len()).collect();
        let (envs, _) = VecEnv::reset(&vec_config, env_config)?;
        Ok(Trainer {
            config: config.clone(),
            vec_config,
            model,
            adam: AdamState::new(&lens),
            envs,
            act_rng: stream(master_seed, "act", 0),
            shuffle_rng: stream(master_seed, "shuffle", 0),
            updates_done: 0,
            env_steps: 0,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn model(&self) -> &AgentModel<R> {
        &self.model
    }

    pub fn adam(&self) -> &AdamState<R> {
        &self.adam
    }

    pub fn updates_done(&self) -> u64 {
        self.updates_done
    }

    pub fn is_finished(&self) -> bool {
        self.updates_done >= self.config.total_updates
    }

    /// Training progress in `[0, 1]` at the start of the next update.
    pub fn progress(&self) -> f64 {
        self.updates_done as f64 / self.config.total_updates as f64
    }

    /// Collect, estimate advantages, optimize.
    pub fn train_update(&mut self) -> Result<TrainStats> {
        if self.is_finished() {
            return Err(Error::usage(format!("all {} updates are done", self.config.total_updates)));
        }
        let progress = self.progress();
        let (lr, clip, ent) = self.config.annealed(progress);
        let horizon = self.config.horizon();
        let mut rollout = collect_rollout(&mut self.model, &mut self.envs, horizon, &mut self.act_rng)?;
        compute_gae(&mut rollout.buffer, self.config.gamma, self.config.gae_lambda)?;
        let s = update(&mut self.model, &mut self.adam, &rollout.buffer, &self.config, progress, &mut self.shuffle_rng)?;
        self.updates_done += 1;
        self.env_steps += rollout.buffer.len() as u64;
        Ok(self.stats_row(lr, clip, ent, &s, &rollout.episodes))
    }

    fn stats_row(&self, lr: f64, clip: f64, ent: f64, s: &UpdateStats, episodes: &[EpisodeSummary]) -> TrainStats {
        let mean = |f: &dyn Fn(&EpisodeSummary) -> f64| {
            (!episodes.is_empty()).then(|| episodes.iter().map(f).sum::<f64>() / episodes.len() as f64)
        };
        TrainStats {
            update: self.updates_done,
            env_steps: self.env_steps,
            lr,
            clip_range: clip,
            entropy_coef: ent,
            policy_loss: s.policy_loss,
            value_loss: s.value_loss,
            entropy: s.entropy,
            clip_fraction: s.clip_fraction,
            approx_kl: s.approx_kl,
            episodes: episodes.len(),
            mean_return: mean(&|e| e.episode_return),
            mean_length: mean(&|e| f64::from(e.length)),
            mean_floor: mean(&|e| f64::from(e.floor)),
        }
    }

    pub fn snapshot(&self) -> TrainerSnapshot {
        let to_f64 = |v: &Vec<R>| v.iter().map(|x| x.f64()).collect::<Vec<f64>>();
        TrainerSnapshot {
            updates_done: self.updates_done,
            env_steps: self.env_steps,
            params: self
                .model
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, t.shape().to_vec(), t.data().iter().map(|x| x.f64()).collect()))
                .collect(),
            adam_step: self.adam.step,
            adam_first: self.adam.first_moment.iter().map(to_f64).collect(),
            adam_second: self.adam.second_moment.iter().map(to_f64).collect(),
            envs: self.envs.snapshot(),
            act_rng: RngState::capture(&self.act_rng),
            shuffle_rng: RngState::capture(&self.shuffle_rng),
        }
    }

    /// Rebuilds a trainer from a snapshot taken under the same configs.
    pub fn restore(
        config: &PpoConfig,
        model_config: &ModelConfig,
        env_config: &EnvConfig,
        vec_config: &VecEnvConfig,
        snap: &TrainerSnapshot,
    ) -> Result<Self> {
        config.validate()?;
        let mut model = AgentModel::zeroed(model_config)?;
        model.load_params(&snap.params)?;
        let lens: Vec<usize> = model.named_params().iter().map(|(_, t)| t.len()).collect();
        let mut adam = AdamState::new(&lens);
        if snap.adam_first.len() != lens.len()
            || snap.adam_second.len() != lens.len()
            || snap.adam_first.iter().chain(&snap.adam_second).zip(lens.iter().chain(&lens)).any(|(m, &l)| m.len() != l)
        {
            return Err(Error::config("optimizer state does not match the model's parameters"));
        }
        adam.step = snap.adam_step;
        adam.first_moment = snap.adam_first.iter().map(|m| m.iter().map(|&x| R::of(x)).collect()).collect();
        adam.second_moment = snap.adam_second.iter().map(|m| m.iter().map(|&x| R::of(x)).collect()).collect();
        Ok(Trainer {
            config: config.clone(),
            vec_config: vec_config.clone(),
            model,
            adam,
            envs: VecEnv::restore(vec_config, env_config, &snap.envs)?,
            act_rng: snap.act_rng.restore(),
            shuffle_rng: snap.shuffle_rng.restore(),
            updates_done: snap.updates_done,
            env_steps: snap.env_steps,
        })
    }

    pub fn vec_config(&self) -> &VecEnvConfig {
        &self.vec_config
    }
}
