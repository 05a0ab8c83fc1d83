//! Uniform-random-policy throughput and outcome baseline.

use std::path::Path;
use std::time::Instant;

use rand::RngExt;
use serde::{Deserialize, Serialize};
use towerlearn_core::env::{EnvConfig, MiniTower, MultiDiscreteAction, Theme, BRANCH_SIZES};
use towerlearn_core::rng::stream;

use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub episode: usize,
    pub seed: u64,
    pub theme: Theme,
    pub steps: u32,
    pub seconds: f64,
    pub steps_per_sec: f64,
    pub episode_return: f64,
    pub floor: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub episodes: usize,
    pub total_steps: u64,
    pub seconds: f64,
    /// Total steps over total time; 0 when nothing ran.
    pub steps_per_sec: f64,
    pub mean_return: Option<f64>,
    pub mean_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub summary: BenchSummary,
    pub rows: Vec<BenchRow>,
}

/// Plays `episodes` episodes with uniformly random actions. Seeds and
/// themes are drawn uniformly from the pools by a stream of `rng_seed`.
pub fn run(config: &EnvConfig, seeds: &[u64], themes: &[Theme], episodes: usize, rng_seed: u64) -> Result<BenchReport> {
    if episodes > 0 && (seeds.is_empty() || themes.is_empty()) {
        return Err(Error::config("bench needs at least one seed and one theme"));
    }
    let mut rng = stream(rng_seed, "bench", 0);
    let mut rows = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let seed = seeds[rng.random_range(0..seeds.len())];
        let theme = themes[rng.random_range(0..themes.len())];
        let start = Instant::now();
        let (mut env, _) = MiniTower::reset(seed, theme, config)?;
        while !env.is_done() {
            let a = MultiDiscreteAction::from_indices(&[
                rng.random_range(0..BRANCH_SIZES[0]),
                rng.random_range(0..BRANCH_SIZES[1]),
                rng.random_range(0..BRANCH_SIZES[2]),
            ])?;
            env.step(a)?;
        }
        let seconds = start.elapsed().as_secs_f64();
        let steps = env.counters().steps;
        rows.push(BenchRow {
            episode,
            seed,
            theme,
            steps,
            seconds,
            steps_per_sec: if seconds > 0.0 { f64::from(steps) / seconds } else { 0.0 },
            episode_return: env.counters().episode_return,
            floor: env.state().floor,
        });
    }
    let total_steps: u64 = rows.iter().map(|r| u64::from(r.steps)).sum();
    let seconds = rows.iter().fold(0.0, |acc, r| acc + r.seconds);
    let n = rows.len() as f64;
    let summary = BenchSummary {
        episodes: rows.len(),
        total_steps,
        seconds,
        steps_per_sec: if seconds > 0.0 { total_steps as f64 / seconds } else { 0.0 },
        mean_return: (!rows.is_empty()).then(|| rows.iter().map(|r| r.episode_return).sum::<f64>() / n),
        mean_floor: (!rows.is_empty()).then(|| rows.iter().map(|r| f64::from(r.floor)).sum::<f64>() / n),
    };
    Ok(BenchReport { summary, rows })
}

pub const EPISODES_CSV: &str = "bench_episodes.csv";
pub const SUMMARY_CSV: &str = "bench_summary.csv";

pub fn write(report: &BenchReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).at(dir)?;
    let path = dir.join(EPISODES_CSV);
    let mut w = csv::Writer::from_writer(std::fs::File::create(&path).at(&path)?);
    for r in &report.rows {
        w.serialize(r)?;
    }
    if report.rows.is_empty() {
        w.write_record(["episode", "seed", "theme", "steps", "seconds", "steps_per_sec", "episode_return", "floor"])?;
    }
    w.flush().at(&path)?;
    let path = dir.join(SUMMARY_CSV);
    let mut w = csv::Writer::from_writer(std::fs::File::create(&path).at(&path)?);
    w.serialize(&report.summary)?;
    w.flush().at(&path)
}
