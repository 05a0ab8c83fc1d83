//! Binary parameter checkpoints and resumable trainer state.
//!
//! A checkpoint directory holds three files:
//!
//! `model.tlck`, all integers little-endian:
//!
//! | bytes        | field                                      |
//! |--------------|--------------------------------------------|
//! | 4            | magic `TLCK`                               |
//! | 4 (u32)      | format version, 1                          |
//! | 4 (u32)      | bytes per value: 4 (f32) or 8 (f64)        |
//! | 4 (u32)      | tensor count                               |
//! | per tensor:  |                                            |
//! | 4 (u32)      | name length `n`                            |
//! | n            | UTF-8 name                                 |
//! | 4 (u32)      | rank `r`                                   |
//! | 8r (u64)     | extents                                    |
//! | 4 or 8 each  | values, row-major, little-endian IEEE 754  |
//!
//! `optimizer.tlos`: magic `TLOS`, version u32, bytes per value u32, Adam
//! step u64, slot count u32, then per slot a u64 length followed by the
//! first moments and then the second moments.
//!
//! `trainer.json`: update and step counters, environment states and the
//! positions of the action and shuffle RNG streams.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use towerlearn_core::model::{AgentModel, ModelConfig};
use towerlearn_core::nn::Real;
use towerlearn_core::ppo::TrainerSnapshot;
use towerlearn_core::rng::RngState;
use towerlearn_core::vec_env::VecEnvSnapshot;

use crate::error::{Error, IoContext, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"TLCK";
pub const OPTIMIZER_MAGIC: &[u8; 4] = b"TLOS";
pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_FILE: &str = "model.tlck";
pub const OPTIMIZER_FILE: &str = "optimizer.tlos";
pub const TRAINER_FILE: &str = "trainer.json";

/// Width of stored values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn of<R: Real>() -> Self {
        if std::mem::size_of::<R>() == 8 {
            Dtype::F64
        } else {
            Dtype::F32
        }
    }

    pub fn width(self) -> u32 {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub type NamedTensor = (String, Vec<usize>, Vec<f64>);

fn put_values(out: &mut Vec<u8>, values: &[f64], dtype: Dtype) {
    for &v in values {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
}

pub fn encode_tlck(tensors: &[NamedTensor], dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dtype.width().to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, shape, data) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        put_values(&mut out, data, dtype);
    }
    out
}

/// Cursor over a byte buffer that reports failures with their offset.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Reader { bytes, pos: 0, path }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse { path: self.path.to_path_buf(), offset: self.pos as u64, message: message.into() })
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return self.fail(format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn i32(&mut self, what: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        let got = self.take(4, "magic")?;
        if got != expected {
            self.pos = at;
            return self.fail(format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(got), String::from_utf8_lossy(expected)));
        }
        Ok(())
    }

    pub(crate) fn version(&mut self, expected: u32) -> Result<()> {
        let at = self.pos;
        let v = self.u32("version")?;
        if v != expected {
            self.pos = at;
            return self.fail(format!("unsupported format version {v}"));
        }
        Ok(())
    }

    fn dtype(&mut self) -> Result<Dtype> {
        let at = self.pos;
        match self.u32("value width")? {
            4 => Ok(Dtype::F32),
            8 => Ok(Dtype::F64),
            w => {
                self.pos = at;
                self.fail(format!("value width must be 4 or 8, got {w}"))
            }
        }
    }

    fn values(&mut self, n: usize, dtype: Dtype, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(dtype.width() as usize)
            .filter(|&b| b <= self.bytes.len() - self.pos)
            .map_or_else(|| self.fail(format!("truncated {what}: {n} values do not fit")), Ok)?;
        let raw = self.take(bytes, what)?;
        Ok(match dtype {
            Dtype::F32 => raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes")))).collect(),
            Dtype::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
        })
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return self.fail(format!("{} trailing bytes", self.bytes.len() - self.pos));
        }
        Ok(())
    }
}

pub fn decode_tlck(bytes: &[u8], path: &Path) -> Result<(Dtype, Vec<NamedTensor>)> {
    let mut r = Reader::new(bytes, path);
    r.magic(MODEL_MAGIC)?;
    r.version(FORMAT_VERSION)?;
    let dtype = r.dtype()?;
    let count = r.u32("tensor count")?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let at = r.offset();
        let name = match std::str::from_utf8(r.take(len, "name")?) {
            Ok(s) => s.to_string(),
            Err(_) => return Err(Error::Parse { path: path.to_path_buf(), offset: at, message: "name is not UTF-8".into() }),
        };
        let rank = r.u32("rank")? as usize;
        if rank > 8 {
            return r.fail(format!("rank {rank} of `{name}` is implausible"));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("extent")? as usize);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let Some(n) = n else { return r.fail(format!("extents of `{name}` overflow")) };
        let data = r.values(n, dtype, &format!("data of `{name}`"))?;
        tensors.push((name, shape, data));
    }
    r.finish()?;
    Ok((dtype, tensors))
}

pub fn write_model<R: Real>(model: &AgentModel<R>, path: &Path) -> Result<()> {
    let tensors: Vec<NamedTensor> = model
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec(), t.data().iter().map(|x| x.f64()).collect()))
        .collect();
    fs::write(path, encode_tlck(&tensors, Dtype::of::<R>())).at(path)
}

/// Loads parameters into a model built from `config`; names and shapes
/// must match exactly.
pub fn read_model<R: Real>(path: &Path, config: &ModelConfig) -> Result<AgentModel<R>> {
    let bytes = fs::read(path).at(path)?;
    let (_, tensors) = decode_tlck(&bytes, path)?;
    let mut model = AgentModel::zeroed(config)?;
    model.load_params(&tensors)?;
    Ok(model)
}

pub fn encode_optimizer(step: u64, first: &[Vec<f64>], second: &[Vec<f64>], dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(OPTIMIZER_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dtype.width().to_le_bytes());
    out.extend_from_slice(&step.to_le_bytes());
    out.extend_from_slice(&(first.len() as u32).to_le_bytes());
    for (m, v) in first.iter().zip(second) {
        out.extend_from_slice(&(m.len() as u64).to_le_bytes());
        put_values(&mut out, m, dtype);
        put_values(&mut out, v, dtype);
    }
    out
}

pub type OptimizerState = (u64, Vec<Vec<f64>>, Vec<Vec<f64>>);

pub fn decode_optimizer(bytes: &[u8], path: &Path) -> Result<OptimizerState> {
    let mut r = Reader::new(bytes, path);
    r.magic(OPTIMIZER_MAGIC)?;
    r.version(FORMAT_VERSION)?;
    let dtype = r.dtype()?;
    let step = r.u64("step")?;
    let count = r.u32("slot count")?;
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for i in 0..count {
        let n = r.u64("slot length")? as usize;
        first.push(r.values(n, dtype, &format!("first moment {i}"))?);
        second.push(r.values(n, dtype, &format!("second moment {i}"))?);
    }
    r.finish()?;
    Ok((step, first, second))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainerFile {
    updates_done: u64,
    env_steps: u64,
    envs: VecEnvSnapshot,
    act_rng: RngState,
    shuffle_rng: RngState,
}

/// Name of the checkpoint directory for `update`.
pub fn checkpoint_name(update: u64) -> String {
    format!("update_{update:06}")
}

/// Writes a full checkpoint into `dir` via a temporary sibling directory,
/// so an interrupted write never leaves a half checkpoint under `dir`.
pub fn save_checkpoint(dir: &Path, snap: &TrainerSnapshot, dtype: Dtype) -> Result<()> {
    let tmp = dir.with_extension("partial");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).at(&tmp)?;
    }
    fs::create_dir_all(&tmp).at(&tmp)?;
    let model = tmp.join(MODEL_FILE);
    fs::write(&model, encode_tlck(&snap.params, dtype)).at(&model)?;
    let opt = tmp.join(OPTIMIZER_FILE);
    fs::write(&opt, encode_optimizer(snap.adam_step, &snap.adam_first, &snap.adam_second, dtype)).at(&opt)?;
    let state = TrainerFile {
        updates_done: snap.updates_done,
        env_steps: snap.env_steps,
        envs: snap.envs.clone(),
        act_rng: snap.act_rng,
        shuffle_rng: snap.shuffle_rng,
    };
    let trainer = tmp.join(TRAINER_FILE);
    let json = serde_json::to_vec(&state).map_err(|e| Error::usage(e.to_string()))?;
    fs::write(&trainer, json).at(&trainer)?;
    if dir.exists() {
        fs::remove_dir_all(dir).at(dir)?;
    }
    fs::rename(&tmp, dir).at(dir)
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainerSnapshot> {
    let model = dir.join(MODEL_FILE);
    let (_, params) = decode_tlck(&fs::read(&model).at(&model)?, &model)?;
    let opt = dir.join(OPTIMIZER_FILE);
    let (adam_step, adam_first, adam_second) = decode_optimizer(&fs::read(&opt).at(&opt)?, &opt)?;
    let trainer = dir.join(TRAINER_FILE);
    let state: TrainerFile = serde_json::from_slice(&fs::read(&trainer).at(&trainer)?)
        .map_err(|e| Error::Parse { path: trainer.clone(), offset: e.column() as u64, message: e.to_string() })?;
    Ok(TrainerSnapshot {
        updates_done: state.updates_done,
        env_steps: state.env_steps,
        params,
        adam_step,
        adam_first,
        adam_second,
        envs: state.envs,
        act_rng: state.act_rng,
        shuffle_rng: state.shuffle_rng,
    })
}

/// Checkpoint directories under `root`, sorted by update.
pub fn list_checkpoints(root: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    if !root.exists() {
        return Ok(out);
    }
    for entry in fs::read_dir(root).at(root)? {
        let entry = entry.at(root)?;
        let name = entry.file_name();
        if let Some(n) = name.to_str().and_then(|s| s.strip_prefix("update_")).and_then(|s| s.parse().ok()) {
            if entry.path().is_dir() {
                out.push((n, entry.path()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Accepts a checkpoint directory or its `model.tlck`.
pub fn model_path(checkpoint: &Path) -> PathBuf {
    if checkpoint.is_dir() {
        checkpoint.join(MODEL_FILE)
    } else {
        checkpoint.to_path_buf()
    }
}
