//! Held-out evaluation: episode runner, path traces, per-theme aggregates,
//! termination histograms and curve points.
//!
//! The mean-floor band is an asymmetric deviation about the mean `m`:
//! `up = sqrt(mean((x - m)^2 for x > m))` and
//! `down = sqrt(mean((x - m)^2 for x < m))`, each 0 when no sample lies on
//! that side.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{generate_floor, EnvConfig, Heading, MiniTower, MultiDiscreteAction, Pos, Termination, Theme};
use crate::model::{AgentModel, ObsBatch};
use crate::nn::Real;
use crate::rng::stream;
use crate::{Error, Result};

/// One agent step as stored in an episode recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordedStep {
    pub action: [usize; 3],
    pub reward: f64,
    pub done: bool,
    /// Floor, position and heading after the step.
    pub floor: u32,
    pub position: Pos,
    pub heading: Heading,
}

/// Everything needed to replay and draw one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub theme: Theme,
    /// [`EnvConfig::fingerprint`] of the config the episode ran under.
    pub config_hash: u64,
    pub steps: Vec<RecordedStep>,
}

impl EpisodeRecord {
    pub fn new(seed: u64, theme: Theme, config: &EnvConfig) -> Self {
        EpisodeRecord { seed, theme, config_hash: config.fingerprint(), steps: Vec::new() }
    }

    pub fn episode_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn final_floor(&self) -> u32 {
        self.steps.last().map_or(0, |s| s.floor)
    }

    fn check_config(&self, config: &EnvConfig) -> Result<()> {
        if self.config_hash != config.fingerprint() {
            return Err(Error::config(format!(
                "recording was made under config {:016x}, not {:016x}",
                self.config_hash,
                config.fingerprint()
            )));
        }
        Ok(())
    }

    /// Replays the actions and checks every recorded pose, reward and done flag.
    pub fn verify(&self, config: &EnvConfig) -> Result<()> {
        self.check_config(config)?;
        let (mut env, _) = MiniTower::reset(self.seed, self.theme, config)?;
        for (i, s) in self.steps.iter().enumerate() {
            let r = env.step(MultiDiscreteAction::from_indices(&s.action)?)?;
            let st = env.state();
            if r.reward != s.reward || r.done != s.done || st.position != s.position || st.heading != s.heading || st.floor != s.floor
            {
                return Err(Error::usage(format!("recording diverges from the environment at step {i}")));
            }
        }
        Ok(())
    }
}

/// One point of an agent path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathPoint {
    pub floor: u32,
    pub position: Pos,
    /// 0 is the pose before the first action.
    pub step: u32,
}

/// Landmarks of a visited floor, as generated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FloorMarkers {
    pub floor: u32,
    pub width: u32,
    pub height: u32,
    pub start: Pos,
    pub exit: Pos,
    pub key: Option<Pos>,
    pub door: Option<Pos>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathTrace {
    pub points: Vec<PathPoint>,
    pub floors: Vec<FloorMarkers>,
}

impl PathTrace {
    /// Builds the trace of `record`, regenerating each visited floor for its
    /// landmarks.
    pub fn from_record(record: &EpisodeRecord, config: &EnvConfig) -> Result<Self> {
        record.check_config(config)?;
        let mut floors: Vec<FloorMarkers> = Vec::new();
        let visit = |floor: u32, floors: &mut Vec<FloorMarkers>| -> Result<Pos> {
            if let Some(m) = floors.iter().find(|m| m.floor == floor) {
                return Ok(m.start);
            }
            let l = generate_floor(record.seed, floor, &config.difficulty)?;
            floors.push(FloorMarkers {
                floor,
                width: l.width,
                height: l.height,
                start: l.start,
                exit: l.exit,
                key: l.key,
                door: l.locked_door,
            });
            Ok(l.start)
        };
        let start = visit(0, &mut floors)?;
        let mut points = alloc::vec![PathPoint { floor: 0, position: start, step: 0 }];
        for (i, s) in record.steps.iter().enumerate() {
            // Completing the last floor leaves the agent on the exit cell.
            if s.floor < config.difficulty.floor_cap {
                visit(s.floor, &mut floors)?;
            }
            let floor = s.floor.min(config.difficulty.floor_cap.saturating_sub(1));
            points.push(PathPoint { floor, position: s.position, step: i as u32 + 1 });
        }
        Ok(PathTrace { points, floors })
    }

    /// Points on `floor`, in step order.
    pub fn floor_points(&self, floor: u32) -> impl Iterator<Item = &PathPoint> {
        self.points.iter().filter(move |p| p.floor == floor)
    }

    /// Whether consecutive points on the same floor are at most one cell apart.
    pub fn is_physically_valid(&self) -> bool {
        self.points.windows(2).all(|w| w[0].floor != w[1].floor || w[0].position.chebyshev(w[1].position) <= 1)
    }
}

/// Plays one episode with `model`, sampling or taking the most probable
/// action per branch.
pub fn run_episode<R: Real, G: Rng + ?Sized>(
    model: &mut AgentModel<R>,
    seed: u64,
    theme: Theme,
    config: &EnvConfig,
    deterministic: bool,
    rng: &mut G,
) -> Result<(EpisodeRecord, Option<Termination>)> {
    let (mut env, mut obs) = MiniTower::reset(seed, theme, config)?;
    let mut record = EpisodeRecord::new(seed, theme, config);
    let model_cfg = model.config().clone();
    loop {
        let batch = ObsBatch::<R>::from_observations(&[&obs], &model_cfg)?;
        let out = if deterministic { model.act_greedy(&batch)? } else { model.act_batch(&batch, rng)? };
        let action = out.actions[0];
        let r = env.step(action)?;
        let st = env.state();
        record.steps.push(RecordedStep {
            action: action.indices(),
            reward: r.reward,
            done: r.done,
            floor: st.floor,
            position: st.position,
            heading: st.heading,
        });
        if r.done {
            return Ok((record, env.termination()));
        }
        obs = r.observation;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    pub seeds: Vec<u64>,
    pub repetitions: usize,
    pub themes: Vec<Theme>,
    /// Take the most probable action instead of sampling.
    pub deterministic: bool,
    pub rng_seed: u64,
}

impl Default for EvalProtocol {
    /// Five held-out seeds (100..105), three repetitions, all five themes.
    fn default() -> Self {
        EvalProtocol { seeds: (100..105).collect(), repetitions: 3, themes: Theme::ALL.to_vec(), deterministic: false, rng_seed: 0 }
    }
}

impl EvalProtocol {
    pub fn episode_count(&self) -> usize {
        self.seeds.len() * self.repetitions * self.themes.len()
    }

    /// Rejects empty protocols and any overlap with `training_seeds`.
    pub fn validate(&self, training_seeds: &[u64]) -> Result<()> {
        if self.seeds.is_empty() || self.repetitions == 0 || self.themes.is_empty() {
            return Err(Error::config("eval protocol needs at least one seed, repetition and theme"));
        }
        let overlap: Vec<u64> = self.seeds.iter().copied().filter(|s| training_seeds.contains(s)).collect();
        if !overlap.is_empty() {
            return Err(Error::config(format!("eval seeds {overlap:?} are in the training seed pool")));
        }
        Ok(())
    }
}

/// One evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub theme: Theme,
    pub seed: u64,
    pub repetition: usize,
    pub floor: u32,
    pub length: u32,
    pub episode_return: f64,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThemeAggregate {
    pub theme: Theme,
    pub episodes: usize,
    pub mean_floor: f64,
    pub floor_variance: f64,
    pub floor_dev_up: f64,
    pub floor_dev_down: f64,
    pub mean_length: f64,
    pub length_variance: f64,
    pub length_std: f64,
    pub mean_return: f64,
}

/// Episodes in protocol order: theme, then seed, then repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: Vec<EvalEpisode>,
    /// Parallel to `episodes`.
    pub records: Vec<EpisodeRecord>,
}

impl EvalReport {
    pub fn aggregates(&self) -> Vec<ThemeAggregate> {
        let mut by_theme: BTreeMap<Theme, Vec<&EvalEpisode>> = BTreeMap::new();
        for e in &self.episodes {
            by_theme.entry(e.theme).or_default().push(e);
        }
        by_theme.into_iter().map(|(theme, eps)| aggregate(theme, &eps)).collect()
    }

    pub fn aggregate_for(&self, theme: Theme) -> Option<ThemeAggregate> {
        self.aggregates().into_iter().find(|a| a.theme == theme)
    }

    /// Mean terminal floor over the episodes whose theme is in `themes`.
    pub fn mean_floor_over(&self, themes: &[Theme]) -> Option<f64> {
        let floors: Vec<f64> = self.episodes.iter().filter(|e| themes.contains(&e.theme)).map(|e| f64::from(e.floor)).collect();
        (!floors.is_empty()).then(|| mean(&floors))
    }
}

fn aggregate(theme: Theme, eps: &[&EvalEpisode]) -> ThemeAggregate {
    let floors: Vec<f64> = eps.iter().map(|e| f64::from(e.floor)).collect();
    let lengths: Vec<f64> = eps.iter().map(|e| f64::from(e.length)).collect();
    let returns: Vec<f64> = eps.iter().map(|e| e.episode_return).collect();
    let (up, down) = asymmetric_deviation(&floors);
    let length_variance = variance(&lengths);
    ThemeAggregate {
        theme,
        episodes: eps.len(),
        mean_floor: mean(&floors),
        floor_variance: variance(&floors),
        floor_dev_up: up,
        floor_dev_down: down,
        mean_length: mean(&lengths),
        length_variance,
        length_std: Float::sqrt(length_variance),
        mean_return: mean(&returns),
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    mean(&xs.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>())
}

/// `(up, down)` RMS deviations of the samples above and below the mean.
pub fn asymmetric_deviation(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let rms = |side: &dyn Fn(f64) -> bool| {
        let d: Vec<f64> = xs.iter().map(|x| x - m).filter(|&d| side(d)).map(|d| d * d).collect();
        Float::sqrt(mean(&d))
    };
    (rms(&|d| d > 0.0), rms(&|d| d < 0.0))
}

/// Runs every (theme, seed, repetition) episode of `protocol`. Episode `i`
/// draws its actions from its own stream, so the report depends only on the
/// model, the configs and `protocol.rng_seed`.
pub fn evaluate<R: Real>(
    model: &mut AgentModel<R>,
    env_config: &EnvConfig,
    protocol: &EvalProtocol,
    training_seeds: &[u64],
) -> Result<EvalReport> {
    protocol.validate(training_seeds)?;
    let m = model.config();
    if m.frame_height != env_config.frame_height || m.frame_width != env_config.frame_width || m.stacked_frames != env_config.stacked_frames {
        return Err(Error::config("checkpoint model does not match the environment's observation shape"));
    }
    let mut report = EvalReport { episodes: Vec::new(), records: Vec::new() };
    for &theme in &protocol.themes {
        for &seed in &protocol.seeds {
            for repetition in 0..protocol.repetitions {
                let index = report.episodes.len() as u64;
                let mut rng = stream(protocol.rng_seed, "eval-episode", index);
                let (record, termination) = run_episode(model, seed, theme, env_config, protocol.deterministic, &mut rng)?;
                report.episodes.push(EvalEpisode {
                    theme,
                    seed,
                    repetition,
                    floor: record.final_floor(),
                    length: record.steps.len() as u32,
                    episode_return: record.episode_return(),
                    termination,
                });
                report.records.push(record);
            }
        }
    }
    Ok(report)
}

/// Terminal-floor counts per theme set, bins `0..=floor_cap`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminationHistogram {
    pub training: Vec<usize>,
    pub held_out: Vec<usize>,
}

impl TerminationHistogram {
    pub fn bins(&self) -> usize {
        self.training.len()
    }
}

/// Splits `episodes` by whether their theme is in `training_themes`.
pub fn termination_histogram(episodes: &[EvalEpisode], training_themes: &[Theme], floor_cap: u32) -> TerminationHistogram {
    let bins = floor_cap as usize + 1;
    let mut h = TerminationHistogram { training: alloc::vec![0; bins], held_out: alloc::vec![0; bins] };
    for e in episodes {
        let bin = (e.floor as usize).min(bins - 1);
        if training_themes.contains(&e.theme) {
            h.training[bin] += 1;
        } else {
            h.held_out[bin] += 1;
        }
    }
    h
}

/// One (update, theme) point of the evaluation curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update: u64,
    pub theme: Theme,
    pub mean_floor: f64,
    pub floor_dev_up: f64,
    pub floor_dev_down: f64,
    pub mean_length: f64,
    pub length_std: f64,
}

/// Curve rows for a sequence of evaluations, one per theme per evaluation.
pub fn curve_points(evaluations: &[(u64, &[EvalEpisode])]) -> Vec<CurvePoint> {
    let mut out = Vec::new();
    for &(update, episodes) in evaluations {
        let report = EvalReport { episodes: episodes.to_vec(), records: Vec::new() };
        for a in report.aggregates() {
            out.push(CurvePoint {
                update,
                theme: a.theme,
                mean_floor: a.mean_floor,
                floor_dev_up: a.floor_dev_up,
                floor_dev_down: a.floor_dev_down,
                mean_length: a.mean_length,
                length_std: a.length_std,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests;
