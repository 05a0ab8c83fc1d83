//! Lockstep environment batch with automatic resets.
//!
//! Slot `i` owns its own RNG stream; every reset in that slot draws a seed
//! and then a theme, uniformly with replacement, from the pools. Slots never
//! share state, so each slot's trajectory is exactly what a solo
//! [`MiniTower`] would produce for the same seed, theme and actions.

use alloc::format;
use alloc::vec::Vec;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EpisodeCounters, MiniTower, MultiDiscreteAction, Observation, Termination, Theme};
use crate::rng::{stream, RngState, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VecEnvConfig {
    pub num_envs: usize,
    pub seed_pool: Vec<u64>,
    pub theme_pool: Vec<Theme>,
    pub base_rng_seed: u64,
}

impl VecEnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_envs == 0 {
            return Err(Error::config("num_envs must be at least 1"));
        }
        if self.seed_pool.is_empty() {
            return Err(Error::config("seed pool is empty"));
        }
        if self.theme_pool.is_empty() {
            return Err(Error::config("theme pool is empty"));
        }
        Ok(())
    }
}

/// Outcome of a finished episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub theme: Theme,
    /// Floor reached when the episode ended.
    pub floor: u32,
    pub length: u32,
    pub episode_return: f64,
    pub termination: Option<Termination>,
    pub counters: EpisodeCounters,
}

impl EpisodeSummary {
    pub fn of(env: &MiniTower) -> Self {
        let c = env.counters();
        EpisodeSummary {
            seed: env.seed(),
            theme: env.theme(),
            floor: env.state().floor,
            length: c.steps,
            episode_return: c.episode_return,
            termination: env.termination(),
            counters: c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepBatch {
    /// After auto-reset: a done slot holds the new episode's first observation.
    pub observations: Vec<Observation>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// `Some` exactly for slots whose episode ended this step.
    pub infos: Vec<Option<EpisodeSummary>>,
}

/// Restorable state of a [`VecEnv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecEnvSnapshot {
    pub envs: Vec<MiniTower>,
    pub rngs: Vec<RngState>,
}

#[derive(Debug, Clone)]
pub struct VecEnv {
    config: VecEnvConfig,
    env_config: EnvConfig,
    envs: Vec<MiniTower>,
    rngs: Vec<StreamRng>,
    observations: Vec<Observation>,
}

fn draw(config: &VecEnvConfig, rng: &mut StreamRng) -> (u64, Theme) {
    let seed = config.seed_pool[rng.random_range(0..config.seed_pool.len())];
    let theme = config.theme_pool[rng.random_range(0..config.theme_pool.len())];
    (seed, theme)
}

impl VecEnv {
    /// Resets every slot; returns the batch and its first observations.
    pub fn reset(config: &VecEnvConfig, env_config: &EnvConfig) -> Result<(VecEnv, Vec<Observation>)> {
        config.validate()?;
        env_config.validate()?;
        let mut envs = Vec::with_capacity(config.num_envs);
        let mut rngs = Vec::with_capacity(config.num_envs);
        let mut observations = Vec::with_capacity(config.num_envs);
        for i in 0..config.num_envs {
            let mut rng = stream(config.base_rng_seed, "vec-env-slot", i as u64);
            let (seed, theme) = draw(config, &mut rng);
            let (env, obs) = MiniTower::reset(seed, theme, env_config)?;
            envs.push(env);
            rngs.push(rng);
            observations.push(obs);
        }
        let v = VecEnv { config: config.clone(), env_config: env_config.clone(), envs, rngs, observations };
        let first = v.observations.clone();
        Ok((v, first))
    }

    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn config(&self) -> &VecEnvConfig {
        &self.config
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env_config
    }

    pub fn envs(&self) -> &[MiniTower] {
        &self.envs
    }

    /// Current observation per slot.
    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn step(&mut self, actions: &[MultiDiscreteAction]) -> Result<StepBatch> {
        if actions.len() != self.envs.len() {
            return Err(Error::usage(format!("{} actions for {} environments", actions.len(), self.envs.len())));
        }
        let n = self.envs.len();
        let mut rewards = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        let mut infos = Vec::with_capacity(n);
        for (i, &action) in actions.iter().enumerate() {
            let r = self.envs[i].step(action)?;
            rewards.push(r.reward);
            dones.push(r.done);
            if r.done {
                infos.push(Some(EpisodeSummary::of(&self.envs[i])));
                let (seed, theme) = draw(&self.config, &mut self.rngs[i]);
                let (env, obs) = MiniTower::reset(seed, theme, &self.env_config)?;
                self.envs[i] = env;
                self.observations[i] = obs;
            } else {
                infos.push(None);
                self.observations[i] = r.observation;
            }
        }
        Ok(StepBatch { observations: self.observations.clone(), rewards, dones, infos })
    }

    pub fn snapshot(&self) -> VecEnvSnapshot {
        VecEnvSnapshot { envs: self.envs.clone(), rngs: self.rngs.iter().map(RngState::capture).collect() }
    }

    pub fn restore(config: &VecEnvConfig, env_config: &EnvConfig, snapshot: &VecEnvSnapshot) -> Result<VecEnv> {
        config.validate()?;
        if snapshot.envs.len() != config.num_envs || snapshot.rngs.len() != config.num_envs {
            return Err(Error::config(format!(
                "snapshot holds {} environments, config asks for {}",
                snapshot.envs.len(),
                config.num_envs
            )));
        }
        if snapshot.envs.iter().any(|e| e.config() != env_config) {
            return Err(Error::config("snapshot environments were built with a different environment config"));
        }
        Ok(VecEnv {
            config: config.clone(),
            env_config: env_config.clone(),
            observations: snapshot.envs.iter().map(MiniTower::observation).collect(),
            envs: snapshot.envs.clone(),
            rngs: snapshot.rngs.iter().map(RngState::restore).collect(),
        })
    }
}
