//! `towerlearn` subcommands. Exit codes: 0 success, 1 runtime failure,
//! 2 invalid configuration, arguments or missing inputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use towerlearn_core::env::Theme;
use towerlearn_core::eval::{evaluate, EvalReport};
use towerlearn_core::nn::Real;

use crate::checkpoint::{model_path, read_model};
use crate::config::{Precision, RunConfig};
use crate::error::{Error, IoContext, Result};
use crate::image::ImageFormat;
use crate::train::{run_dir_of, TrainOptions, EVAL_DIR};
use crate::{bench, paths, recording, report};

#[derive(Debug, Parser)]
#[command(name = "towerlearn", version, about = "Branched-action PPO on a procedural tower")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy into a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint under an evaluation protocol.
    Eval(EvalArgs),
    /// Draw top-down agent paths from episode recordings.
    RenderPaths(RenderArgs),
    /// Measure random-policy environment throughput.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML config file; without one the desk preset is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` applied after the file, e.g. `ppo.total_updates=10`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Continue the run in this directory from its latest checkpoint.
    #[arg(long, conflicts_with_all = ["config", "overrides"])]
    pub resume: Option<PathBuf>,
    /// Progress line every N updates (0 for none).
    #[arg(long, default_value_t = 10)]
    pub log_every: u64,
    /// Stop after N updates in this invocation, leaving a checkpoint.
    #[arg(long)]
    pub max_updates: Option<u64>,
    #[arg(long, value_enum, default_value_t)]
    pub format: ImageFormat,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint directory or `model.tlck` file.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Config to evaluate under; defaults to the owning run's `config.toml`.
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated themes, replacing the protocol's.
    #[arg(long, value_delimiter = ',')]
    pub themes: Vec<Theme>,
    /// Output directory; defaults to `<run_dir>/reports/<checkpoint>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: ImageFormat,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Run directory.
    pub run_dir: PathBuf,
    /// Recording directory; defaults to the latest evaluation's recordings.
    #[arg(long)]
    pub recordings: Option<PathBuf>,
    /// Evaluation update whose recordings to draw.
    #[arg(long, conflicts_with = "recordings")]
    pub update: Option<u64>,
    /// Episode ids (recording file stems); all episodes when omitted.
    #[arg(long = "episode")]
    pub episodes: Vec<String>,
    /// Output directory; defaults to `paths/` beside the recordings.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: ImageFormat,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Directory for `bench_episodes.csv` and `bench_summary.csv`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Seed for the random policy and the seed/theme draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::RenderPaths(a) => cmd_render_paths(&a).map(|_| ()),
        Command::Bench(a) => cmd_bench(&a).map(|_| ()),
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let opts = TrainOptions { format: a.format, log_every: a.log_every, max_updates: a.max_updates };
    let dir = match &a.resume {
        Some(dir) => crate::train::resume(dir, &opts)?,
        None => crate::train::train(&a.config.resolve()?, &opts)?,
    };
    println!("run directory: {}", dir.display());
    Ok(())
}

fn eval_with<R: Real>(config: &RunConfig, model_file: &Path) -> Result<EvalReport> {
    let mut model = read_model::<R>(model_file, &config.model)?;
    Ok(evaluate(&mut model, &config.env, &config.eval, &config.train.training_seeds)?)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<PathBuf> {
    let model_file = model_path(&a.checkpoint);
    if !model_file.is_file() {
        return Err(Error::usage(format!("checkpoint {} not found", model_file.display())));
    }
    let run_dir = run_dir_of(&a.checkpoint);
    let mut config = match (&a.config.config, &run_dir) {
        (None, Some(dir)) => {
            let text = std::fs::read_to_string(dir.join(crate::config::CONFIG_FILE)).at(dir)?;
            RunConfig::resolve(&text, &a.config.overrides)?
        }
        _ => a.config.resolve()?,
    };
    if !a.themes.is_empty() {
        config.eval.themes = a.themes.clone();
        config.validate()?;
    }
    let report = match config.precision {
        Precision::F32 => eval_with::<f32>(&config, &model_file)?,
        Precision::F64 => eval_with::<f64>(&config, &model_file)?,
    };
    let name = a.checkpoint.file_name().map_or("checkpoint".into(), |n| n.to_string_lossy().into_owned());
    let out = match (&a.out, &run_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(dir)) => dir.join("reports").join(name),
        (None, None) => PathBuf::from("reports").join(name),
    };
    report::write_eval(&out, &report, &config.env, &config.train.training_themes, config.train.record_episodes, a.format)?;
    for agg in report.aggregates() {
        println!(
            "{:<10} episodes {:>3} mean floor {:.3} (+{:.3} / -{:.3}) mean length {:.1} (sd {:.1})",
            agg.theme, agg.episodes, agg.mean_floor, agg.floor_dev_up, agg.floor_dev_down, agg.mean_length, agg.length_std
        );
    }
    println!("report: {}", out.display());
    Ok(out)
}

pub fn cmd_render_paths(a: &RenderArgs) -> Result<Vec<PathBuf>> {
    let config = RunConfig::read_resolved(&a.run_dir)?;
    let rec_dir = match (&a.recordings, a.update) {
        (Some(d), _) => d.clone(),
        (None, Some(u)) => a.run_dir.join(EVAL_DIR).join(crate::checkpoint::checkpoint_name(u)).join(report::RECORDINGS_DIR),
        (None, None) => match crate::checkpoint::list_checkpoints(&a.run_dir.join(EVAL_DIR))?.pop() {
            Some((_, d)) => d.join(report::RECORDINGS_DIR),
            None => return Err(Error::usage(format!("{} has no evaluation recordings", a.run_dir.display()))),
        },
    };
    if !rec_dir.is_dir() {
        return Err(Error::usage(format!("recording directory {} not found", rec_dir.display())));
    }
    let files: Vec<PathBuf> = recording::list(&rec_dir)?
        .into_iter()
        .filter(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            a.episodes.is_empty() || a.episodes.contains(&stem)
        })
        .collect();
    if files.is_empty() {
        return Err(Error::usage(format!("no recording in {} matches the selection", rec_dir.display())));
    }
    let out = a.out.clone().unwrap_or_else(|| rec_dir.parent().unwrap_or(&rec_dir).join("paths"));
    std::fs::create_dir_all(&out).at(&out)?;
    let mut written = Vec::new();
    for f in &files {
        let rec = recording::read(f)?;
        let stem = f.file_stem().expect("listed files have stems").to_string_lossy();
        written.extend(paths::write_episode(&rec, &config.env, &out, &stem, a.format)?);
    }
    println!("{} images from {} recordings in {}", written.len(), files.len(), out.display());
    Ok(written)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<bench::BenchReport> {
    let config = a.config.resolve()?;
    let report = bench::run(&config.env, &config.train.training_seeds, &config.train.training_themes, a.episodes, a.seed)?;
    bench::write(&report, &a.out)?;
    let s = &report.summary;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    println!(
        "episodes {} steps {} seconds {:.3} steps/s {:.0} mean return {} mean floor {}",
        s.episodes,
        s.total_steps,
        s.seconds,
        s.steps_per_sec,
        fmt(s.mean_return),
        fmt(s.mean_floor)
    );
    Ok(report)
}
