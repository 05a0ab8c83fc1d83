//! A procedural, grid-based tower.
//!
//! Floors are generated from `(seed, floor)`; the agent walks an egocentric
//! top-down rendering of them. Completing a floor regenerates the next one
//! in place. The episode ends when time runs out, the agent drops into a
//! gap, or the floor cap is completed.
//!
//! One agent step applies its action for `frame_skip` ticks. Per tick:
//! rotate, then move one cell forward if asked and the cell is enterable,
//! then resolve the cell entered, then check for falling, then spend one
//! unit of time. An agent standing on a gap at the end of a tick falls
//! unless it both jumped and moved that tick. A floor completion ends the
//! step early.

mod action;
pub mod layout;
pub mod oracle;
pub mod render;
mod theme;

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;
use core::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

pub use action::{Jump, Movement, MultiDiscreteAction, Rotation, BRANCH_SIZES};
pub use layout::{generate_floor, is_solvable, CellKind, DifficultyConfig, FloorLayout, Heading, Pos};
pub use render::{render, Palette, View};
pub use theme::Theme;

use crate::{Error, Result};

pub const FLOOR_REWARD: f64 = 1.0;
pub const KEY_REWARD: f64 = 0.1;
pub const DOOR_REWARD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub frame_height: usize,
    pub frame_width: usize,
    pub stacked_frames: usize,
    pub frame_skip: u32,
    /// Cells visible in each direction from the agent.
    pub view_radius: u32,
    /// Divide pixel bytes by 255 twice instead of once.
    pub double_normalization: bool,
    /// Ticks available at reset.
    pub time_budget: u32,
    /// Ticks added on completing a floor.
    pub floor_time_bonus: u32,
    /// Ticks added by a time orb.
    pub orb_time_bonus: u32,
    pub difficulty: DifficultyConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            frame_height: 64,
            frame_width: 64,
            stacked_frames: 3,
            frame_skip: 2,
            view_radius: 4,
            double_normalization: true,
            time_budget: 500,
            floor_time_bonus: 250,
            orb_time_bonus: 50,
            difficulty: DifficultyConfig::default(),
        }
    }
}

/// FNV-1a, used to fingerprint configs.
struct Fnv(u64);

impl Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.difficulty.validate()?;
        if self.stacked_frames == 0 {
            return Err(Error::config("env.stacked_frames must be at least 1"));
        }
        if self.frame_skip == 0 {
            return Err(Error::config("env.frame_skip must be at least 1"));
        }
        if self.time_budget == 0 {
            return Err(Error::config("env.time_budget must be positive"));
        }
        let span = 2 * self.view_radius as usize + 1;
        if self.frame_height < span || self.frame_width < span {
            return Err(Error::config(format!(
                "env frame {}x{} is smaller than the {span}-cell view",
                self.frame_height, self.frame_width
            )));
        }
        Ok(())
    }

    /// Stable fingerprint of everything that affects dynamics or pixels.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv(0xcbf2_9ce4_8422_2325);
        self.hash(&mut h);
        h.finish()
    }

    pub fn frame_len(&self) -> usize {
        self.frame_height * self.frame_width * 3
    }
}

/// Byte frame to reals: `/255`, or `/255/255` with the double-division quirk.
pub fn normalize_pixel(byte: u8, double_normalization: bool) -> f32 {
    let once = f32::from(byte) / 255.0;
    if double_normalization {
        once / 255.0
    } else {
        once
    }
}

/// What the agent sees: stacked frames plus the game-state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub stacked_frames: usize,
    pub height: usize,
    pub width: usize,
    /// `[stacked_frames, height, width, 3]`, oldest frame first.
    pub frames: Vec<f32>,
    /// `[has_key (0 or 1), remaining time / time budget clamped to 1]`
    pub game_state: Vec<f32>,
}

/// Rolling history of raw frames, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameStack {
    capacity: usize,
    frames: VecDeque<Vec<u8>>,
}

impl FrameStack {
    /// A stack padded by repeating `first`.
    pub fn filled(capacity: usize, first: Vec<u8>) -> Self {
        let mut frames = VecDeque::with_capacity(capacity);
        for _ in 1..capacity {
            frames.push_back(first.clone());
        }
        frames.push_back(first);
        FrameStack { capacity, frames }
    }

    pub fn push(&mut self, frame: Vec<u8>) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn frames(&self) -> impl Iterator<Item = &[u8]> {
        self.frames.iter().map(Vec::as_slice)
    }

    pub fn newest(&self) -> &[u8] {
        self.frames.back().expect("stack is never empty")
    }
}

/// Builds the observation from raw frame history and the game state.
pub fn wrap_observation(stack: &FrameStack, game_state: [f32; 2], config: &EnvConfig) -> Observation {
    let mut frames = Vec::with_capacity(config.stacked_frames * config.frame_len());
    for f in stack.frames() {
        frames.extend(f.iter().map(|&b| normalize_pixel(b, config.double_normalization)));
    }
    Observation {
        stacked_frames: config.stacked_frames,
        height: config.frame_height,
        width: config.frame_width,
        frames,
        game_state: game_state.to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Timeout,
    Fell,
    /// The last floor below the cap was completed.
    FloorCap,
}

/// Agent pose after one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickRecord {
    pub floor: u32,
    pub position: Pos,
    pub heading: Heading,
}

/// Mutable world state. The theme lives on [`MiniTower`], not here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub layout: FloorLayout,
    pub position: Pos,
    pub heading: Heading,
    pub has_key: bool,
    pub remaining_time: u32,
    pub floor: u32,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeCounters {
    pub steps: u32,
    pub episode_return: f64,
    pub floors_completed: u32,
    pub keys_collected: u32,
    pub doors_opened: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Floor the agent is on; equals the floor cap once the tower is finished.
    pub floor: u32,
    pub ticks: Vec<TickRecord>,
    pub counters: EpisodeCounters,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One tower instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiniTower {
    config: EnvConfig,
    seed: u64,
    theme: Theme,
    state: EnvState,
    stack: FrameStack,
    counters: EpisodeCounters,
    termination: Option<Termination>,
}

impl MiniTower {
    /// Starts a new episode on floor 0 of tower `seed`.
    pub fn reset(seed: u64, theme: Theme, config: &EnvConfig) -> Result<(MiniTower, Observation)> {
        config.validate()?;
        let layout = generate_floor(seed, 0, &config.difficulty)?;
        let state = EnvState {
            position: layout.start,
            heading: Heading::North,
            has_key: false,
            remaining_time: config.time_budget,
            floor: 0,
            done: false,
            layout,
        };
        let first = Self::render_state(&state, theme, config);
        let env = MiniTower {
            config: config.clone(),
            seed,
            theme,
            stack: FrameStack::filled(config.stacked_frames, first),
            state,
            counters: EpisodeCounters::default(),
            termination: None,
        };
        let obs = env.observation();
        Ok((env, obs))
    }

    pub fn render_state(state: &EnvState, theme: Theme, config: &EnvConfig) -> Vec<u8> {
        let view = View { position: state.position, heading: state.heading, radius: config.view_radius };
        render(&state.layout, view, theme, config.frame_height, config.frame_width)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn theme(&self) -> Theme {
        self.theme
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn counters(&self) -> EpisodeCounters {
        self.counters
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn is_done(&self) -> bool {
        self.state.done
    }

    pub fn frame_stack(&self) -> &FrameStack {
        &self.stack
    }

    pub fn game_state(&self) -> [f32; 2] {
        let time = (self.state.remaining_time as f32 / self.config.time_budget as f32).min(1.0);
        [if self.state.has_key { 1.0 } else { 0.0 }, time]
    }

    pub fn observation(&self) -> Observation {
        wrap_observation(&self.stack, self.game_state(), &self.config)
    }

    pub fn step(&mut self, action: MultiDiscreteAction) -> Result<StepResult> {
        if self.state.done {
            return Err(Error::usage("step called on a finished episode; reset first"));
        }
        let mut reward = 0.0;
        let mut ticks = Vec::with_capacity(self.config.frame_skip as usize);
        for tick in 0..self.config.frame_skip {
            let outcome = advance_tick(&mut self.state, &self.config, action, tick);
            reward += outcome.reward;
            self.counters.floors_completed += u32::from(outcome.floor_completed);
            self.counters.keys_collected += u32::from(outcome.key_collected);
            self.counters.doors_opened += u32::from(outcome.door_opened);
            if outcome.termination.is_some() {
                self.termination = outcome.termination;
            }
            ticks.push(TickRecord { floor: self.state.floor, position: self.state.position, heading: self.state.heading });
            if self.state.done || outcome.floor_completed {
                break;
            }
        }
        self.counters.steps += 1;
        self.counters.episode_return += reward;
        let frame = Self::render_state(&self.state, self.theme, &self.config);
        self.stack.push(frame);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.state.done,
            info: StepInfo {
                floor: self.state.floor,
                ticks,
                counters: self.counters,
                termination: self.termination,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TickOutcome {
    pub reward: f64,
    pub floor_completed: bool,
    pub key_collected: bool,
    pub door_opened: bool,
    pub termination: Option<Termination>,
}

/// Applies skipped tick `tick` of a step taking `action`. The action acts on
/// the first tick; the remaining ticks of the step only spend time.
pub fn advance_tick(s: &mut EnvState, config: &EnvConfig, action: MultiDiscreteAction, tick: u32) -> TickOutcome {
    let mut out = TickOutcome::default();
    if s.done {
        return out;
    }
    if tick > 0 {
        spend_tick(s, &mut out);
        return out;
    }
    s.heading = match action.rotation {
        Rotation::None => s.heading,
        Rotation::Left => s.heading.left(),
        Rotation::Right => s.heading.right(),
    };
    let mut moved = false;
    if action.forward() {
        let target = s.position.step(s.heading);
        match s.layout.cell(target) {
            CellKind::Wall => {}
            CellKind::LockedDoor => {
                if s.has_key {
                    s.layout.set(target, CellKind::Door);
                    s.has_key = false;
                    out.reward += DOOR_REWARD;
                    out.door_opened = true;
                    s.position = target;
                    moved = true;
                }
            }
            _ => {
                s.position = target;
                moved = true;
            }
        }
    }
    if moved {
        match s.layout.cell(s.position) {
            CellKind::Key => {
                s.layout.set(s.position, CellKind::Open);
                s.has_key = true;
                out.reward += KEY_REWARD;
                out.key_collected = true;
            }
            CellKind::Orb => {
                s.layout.set(s.position, CellKind::Open);
                s.remaining_time += config.orb_time_bonus;
            }
            CellKind::Exit => {
                out.reward += FLOOR_REWARD;
                out.floor_completed = true;
                s.remaining_time = s.remaining_time.saturating_sub(1);
                let next = s.floor + 1;
                s.floor = next;
                if next >= config.difficulty.floor_cap {
                    s.done = true;
                    out.termination = Some(Termination::FloorCap);
                } else {
                    let layout = generate_floor(s.layout.seed, next, &config.difficulty)
                        .expect("generator is total below the floor cap");
                    s.position = layout.start;
                    s.heading = Heading::North;
                    s.has_key = false;
                    s.layout = layout;
                    s.remaining_time += config.floor_time_bonus;
                    if s.remaining_time == 0 {
                        s.done = true;
                        out.termination = Some(Termination::Timeout);
                    }
                }
                return out;
            }
            _ => {}
        }
    }
    if s.layout.cell(s.position) == CellKind::Gap && !(action.jumping() && moved) {
        s.done = true;
        out.termination = Some(Termination::Fell);
    }
    spend_tick(s, &mut out);
    out
}

fn spend_tick(s: &mut EnvState, out: &mut TickOutcome) {
    s.remaining_time = s.remaining_time.saturating_sub(1);
    if s.remaining_time == 0 && !s.done {
        s.done = true;
        out.termination = Some(Termination::Timeout);
    }
}

#[cfg(test)]
mod tests;
