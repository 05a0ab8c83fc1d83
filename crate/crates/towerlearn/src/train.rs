//! Run directories: training with periodic checkpoints and evaluations,
//! and resumption.
//!
//! ```text
//! <run_dir>/config.toml                 resolved configuration
//! <run_dir>/stats.csv                   one row per update
//! <run_dir>/checkpoints/update_NNNNNN/  model.tlck, optimizer.tlos, trainer.json
//! <run_dir>/eval/update_NNNNNN/         episodes.csv, aggregates.csv, histogram.*, recordings/
//! <run_dir>/curves.csv                  per-theme evaluation curves
//! <run_dir>/mean_floor.*, mean_length.* curve plots
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use towerlearn_core::eval::evaluate;
use towerlearn_core::nn::Real;
use towerlearn_core::ppo::{vec_env_config, TrainStats, Trainer};

use crate::checkpoint::{checkpoint_name, list_checkpoints, load_checkpoint, save_checkpoint, Dtype};
use crate::config::{Precision, RunConfig, CONFIG_FILE};
use crate::error::{Error, IoContext, Result};
use crate::image::ImageFormat;
use crate::report::{write_curves, write_eval};

pub const STATS_CSV: &str = "stats.csv";
pub const CHECKPOINTS_DIR: &str = "checkpoints";
pub const EVAL_DIR: &str = "eval";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    pub format: ImageFormat,
    /// Print a progress line every this many updates; 0 is silent.
    pub log_every: u64,
    /// Stop after this many updates in this invocation, leaving a
    /// resumable checkpoint.
    pub max_updates: Option<u64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { format: ImageFormat::Ppm, log_every: 0, max_updates: None }
    }
}

/// Starts a fresh run in `config.run_dir`, which must not already hold one.
pub fn train(config: &RunConfig, opts: &TrainOptions) -> Result<PathBuf> {
    config.validate()?;
    let dir = config.run_dir.clone();
    if dir.join(STATS_CSV).exists() || dir.join(CHECKPOINTS_DIR).exists() {
        return Err(Error::usage(format!("{} already holds a run; resume it or pick another run_dir", dir.display())));
    }
    fs::create_dir_all(&dir).at(&dir)?;
    config.write_resolved(&dir)?;
    match config.precision {
        Precision::F32 => run::<f32>(config, &dir, None, opts),
        Precision::F64 => run::<f64>(config, &dir, None, opts),
    }?;
    Ok(dir)
}

/// Continues the run in `dir` from its latest checkpoint. Stats rows and
/// evaluations written after that checkpoint are discarded first.
pub fn resume(dir: &Path, opts: &TrainOptions) -> Result<PathBuf> {
    let config = RunConfig::read_resolved(dir)?;
    let Some((_, latest)) = list_checkpoints(&dir.join(CHECKPOINTS_DIR))?.pop() else {
        return Err(Error::usage(format!("{} has no checkpoint to resume from", dir.display())));
    };
    match config.precision {
        Precision::F32 => run::<f32>(&config, dir, Some(&latest), opts),
        Precision::F64 => run::<f64>(&config, dir, Some(&latest), opts),
    }?;
    Ok(dir.to_path_buf())
}

fn truncate_stats(path: &Path, updates: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(path).at(path)?;
    let kept: Vec<&str> = text.lines().take(1 + updates as usize).collect();
    fs::write(path, kept.join("\n") + "\n").at(path)
}

fn run<R: Real>(config: &RunConfig, dir: &Path, from: Option<&Path>, opts: &TrainOptions) -> Result<()> {
    let train = &config.train;
    let mut trainer = match from {
        None => Trainer::<R>::new(&config.ppo, &config.model, &config.env, &train.training_seeds, &train.training_themes, config.seed)?,
        Some(ckpt) => {
            let snap = load_checkpoint(ckpt)?;
            let vec = vec_env_config(&config.ppo, &train.training_seeds, &train.training_themes, config.seed);
            let t = Trainer::<R>::restore(&config.ppo, &config.model, &config.env, &vec, &snap)?;
            truncate_stats(&dir.join(STATS_CSV), t.updates_done())?;
            for (u, stale) in list_checkpoints(&dir.join(EVAL_DIR))? {
                if u > t.updates_done() {
                    fs::remove_dir_all(&stale).at(&stale)?;
                }
            }
            t
        }
    };

    let stats_path = dir.join(STATS_CSV);
    let fresh = !stats_path.exists();
    let file = fs::OpenOptions::new().create(true).append(true).open(&stats_path).at(&stats_path)?;
    let mut stats = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    let ckpt_root = dir.join(CHECKPOINTS_DIR);
    let eval_root = dir.join(EVAL_DIR);
    let mut ran = 0u64;
    let last_checkpoint = |ckpt_root: &Path| {
        list_checkpoints(ckpt_root).ok().and_then(|mut v| v.pop()).map(|(_, p)| p.display().to_string())
    };

    while !trainer.is_finished() && opts.max_updates.is_none_or(|m| ran < m) {
        let row: TrainStats = trainer.train_update().map_err(|e| {
            let at = last_checkpoint(&ckpt_root).unwrap_or_else(|| "no checkpoint yet".into());
            Error::Core(towerlearn_core::Error::Training(format!("{e}; resume from {at}")))
        })?;
        ran += 1;
        stats.serialize(&row)?;
        stats.flush().at(&stats_path)?;
        let u = row.update;
        if opts.log_every > 0 && u % opts.log_every == 0 {
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
            println!(
                "update {u}/{} steps {} return {} floor {} entropy {:.3} lr {:.2e}",
                config.ppo.total_updates,
                row.env_steps,
                fmt(row.mean_return),
                fmt(row.mean_floor),
                row.entropy,
                row.lr
            );
            let _ = std::io::stdout().flush();
        }
        let interval_hit = |k: u64| k > 0 && u % k == 0;
        if interval_hit(train.checkpoint_interval) || trainer.is_finished() || opts.max_updates == Some(ran) {
            save_checkpoint(&ckpt_root.join(checkpoint_name(u)), &trainer.snapshot(), Dtype::of::<R>())?;
        }
        if interval_hit(train.eval_interval) {
            let mut model = trainer.model().clone();
            let report = evaluate(&mut model, &config.env, &config.eval, &train.training_seeds)?;
            let out = eval_root.join(checkpoint_name(u));
            write_eval(&out, &report, &config.env, &train.training_themes, train.record_episodes, opts.format)?;
            write_curves(&eval_root, dir, opts.format)?;
        }
    }
    Ok(())
}

/// Locates the run directory that owns a checkpoint path by walking up to
/// the nearest `config.toml`.
pub fn run_dir_of(checkpoint: &Path) -> Option<PathBuf> {
    checkpoint.ancestors().find(|a| a.join(CONFIG_FILE).is_file()).map(Path::to_path_buf)
}
