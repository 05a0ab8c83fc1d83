#![allow(dead_code)]

pub mod fixture;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A 16x16 run small enough to train and evaluate in seconds.
pub const TINY: &str = r#"
preset = "desk"
seed = 7

[env]
frame_height = 16
frame_width = 16
time_budget = 40
floor_time_bonus = 20

[model]
frame_height = 16
frame_width = 16
hidden_size = 16
encoder = [
    { out_channels = 4, kernel = 4, stride = 2 },
    { out_channels = 8, kernel = 3, stride = 1 },
]

[ppo]
total_updates = 4
num_envs = 2
trajectory_length = 32

[train]
checkpoint_interval = 2
eval_interval = 2

[eval]
seeds = [100, 101]
repetitions = 1
themes = ["ancient", "future"]
"#;

pub fn write_tiny(dir: &Path, run_dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("tiny.toml");
    let text = TINY.replacen("seed = 7", &format!("seed = 7\nrun_dir = {:?}\n{extra}", run_dir.display().to_string()), 1);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn towerlearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_towerlearn")).args(args).output().expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
