//! CSV and figure output for evaluations, curves and histograms.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use towerlearn_core::env::{EnvConfig, Termination, Theme};
use towerlearn_core::eval::{curve_points, termination_histogram, CurvePoint, EvalEpisode, EvalReport, TerminationHistogram};

use crate::error::{IoContext, Result};
use crate::image::ImageFormat;
use crate::plot::{bar_chart, line_plot, theme_color, Series};
use crate::recording;

pub const EPISODES_CSV: &str = "episodes.csv";
pub const AGGREGATES_CSV: &str = "aggregates.csv";
pub const HISTOGRAM_CSV: &str = "histogram.csv";
pub const CURVES_CSV: &str = "curves.csv";
pub const RECORDINGS_DIR: &str = "recordings";

const PLOT_SIZE: (usize, usize) = (480, 300);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub theme: Theme,
    pub seed: u64,
    pub repetition: usize,
    pub floor: u32,
    pub length: u32,
    pub episode_return: f64,
    pub termination: Option<Termination>,
    /// Recording file name, relative to the report's `recordings/`.
    pub recording: String,
}

impl EpisodeRow {
    pub fn episode(&self) -> EvalEpisode {
        EvalEpisode {
            theme: self.theme,
            seed: self.seed,
            repetition: self.repetition,
            floor: self.floor,
            length: self.length,
            episode_return: self.episode_return,
            termination: self.termination,
        }
    }
}

/// File stem identifying an evaluation episode.
pub fn episode_id(e: &EvalEpisode) -> String {
    format!("{}_seed{}_rep{}", e.theme, e.seed, e.repetition)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_writer(fs::File::create(path).at(path)?))
}

/// Writes episode rows, aggregates, the termination histogram and, when
/// `record` is set, one recording per episode into `dir`.
pub fn write_eval(dir: &Path, report: &EvalReport, env: &EnvConfig, training_themes: &[Theme], record: bool, format: ImageFormat) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    let rec_dir = dir.join(RECORDINGS_DIR);
    if record {
        fs::create_dir_all(&rec_dir).at(&rec_dir)?;
    }
    let path = dir.join(EPISODES_CSV);
    let mut w = csv_writer(&path)?;
    for (e, r) in report.episodes.iter().zip(&report.records) {
        let name = format!("{}.{}", episode_id(e), recording::EXTENSION);
        if record {
            recording::write(&rec_dir.join(&name), r)?;
        }
        w.serialize(EpisodeRow {
            theme: e.theme,
            seed: e.seed,
            repetition: e.repetition,
            floor: e.floor,
            length: e.length,
            episode_return: e.episode_return,
            termination: e.termination,
            recording: if record { name } else { String::new() },
        })?;
    }
    w.flush().at(&path)?;

    let path = dir.join(AGGREGATES_CSV);
    let mut w = csv_writer(&path)?;
    for a in report.aggregates() {
        w.serialize(a)?;
    }
    w.flush().at(&path)?;

    let hist = termination_histogram(&report.episodes, training_themes, env.difficulty.floor_cap);
    write_histogram(dir, &hist, format)
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeRow>> {
    let mut r = csv::Reader::from_reader(fs::File::open(path).at(path)?);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_histogram(dir: &Path, hist: &TerminationHistogram, format: ImageFormat) -> Result<()> {
    let path = dir.join(HISTOGRAM_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["floor", "training_themes", "held_out_themes"])?;
    for (floor, (t, h)) in hist.training.iter().zip(&hist.held_out).enumerate() {
        w.write_record([floor.to_string(), t.to_string(), h.to_string()])?;
    }
    w.flush().at(&path)?;
    let img = bar_chart(
        &[("train", [40, 120, 220], &hist.training), ("held-out", [220, 60, 60], &hist.held_out)],
        "end floor",
        PLOT_SIZE.0,
        PLOT_SIZE.1,
    );
    img.save(&dir.join(format!("histogram.{}", format.extension())))
}

/// Evaluation directories `update_NNNNNN` under `root`, sorted by update.
pub fn eval_dirs(root: &Path) -> Result<Vec<(u64, PathBuf)>> {
    crate::checkpoint::list_checkpoints(root)
}

/// Rebuilds the curves from every evaluation under `eval_root` and writes
/// `curves.csv` plus mean-floor and mean-length plots into `out_dir`.
pub fn write_curves(eval_root: &Path, out_dir: &Path, format: ImageFormat) -> Result<Vec<CurvePoint>> {
    let mut evals = Vec::new();
    for (update, dir) in eval_dirs(eval_root)? {
        let rows = read_episodes(&dir.join(EPISODES_CSV))?;
        evals.push((update, rows.iter().map(EpisodeRow::episode).collect::<Vec<_>>()));
    }
    let borrowed: Vec<(u64, &[EvalEpisode])> = evals.iter().map(|(u, e)| (*u, e.as_slice())).collect();
    let points = curve_points(&borrowed);
    let path = out_dir.join(CURVES_CSV);
    let mut w = csv_writer(&path)?;
    for p in &points {
        w.serialize(p)?;
    }
    w.flush().at(&path)?;

    let series = |f: &dyn Fn(&CurvePoint) -> (f64, f64, f64)| -> Vec<Series> {
        Theme::ALL
            .iter()
            .filter_map(|&t| {
                let pts: Vec<_> = points
                    .iter()
                    .filter(|p| p.theme == t)
                    .map(|p| {
                        let (y, lo, hi) = f(p);
                        (p.update as f64, y, lo, hi)
                    })
                    .collect();
                (!pts.is_empty()).then(|| Series { label: t.name().into(), color: theme_color(t), points: pts })
            })
            .collect()
    };
    let floors = series(&|p| (p.mean_floor, p.mean_floor - p.floor_dev_down, p.mean_floor + p.floor_dev_up));
    line_plot(&floors, "mean floor", PLOT_SIZE.0, PLOT_SIZE.1).save(&out_dir.join(format!("mean_floor.{}", format.extension())))?;
    let lengths = series(&|p| (p.mean_length, p.mean_length - p.length_std, p.mean_length + p.length_std));
    line_plot(&lengths, "mean length", PLOT_SIZE.0, PLOT_SIZE.1).save(&out_dir.join(format!("mean_length.{}", format.extension())))?;
    Ok(points)
}
