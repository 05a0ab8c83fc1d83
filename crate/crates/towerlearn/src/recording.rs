//! Episode recordings, one file per episode.
//!
//! Layout, little-endian:
//!
//! | bytes     | field                                   |
//! |-----------|-----------------------------------------|
//! | 4         | magic `TLEP`                            |
//! | 4 (u32)   | format version, 1                       |
//! | 8 (u64)   | tower seed                              |
//! | 1 (u8)    | theme index (ancient 0 .. future 4)     |
//! | 8 (u64)   | environment config fingerprint          |
//! | 4 (u32)   | step count                              |
//! | per step: |                                         |
//! | 3 (u8)    | movement, jump, rotation indices        |
//! | 8 (f64)   | reward                                  |
//! | 1 (u8)    | done flag                               |
//! | 4 (u32)   | floor after the step                    |
//! | 4+4 (i32) | x, y after the step                     |
//! | 1 (u8)    | heading after the step (N 0, E 1, S 2, W 3) |

use std::fs;
use std::path::{Path, PathBuf};

use towerlearn_core::env::{Heading, Pos, Theme, BRANCH_SIZES};
use towerlearn_core::eval::{EpisodeRecord, RecordedStep};

use crate::checkpoint::Reader;
use crate::error::{IoContext, Result};

pub const MAGIC: &[u8; 4] = b"TLEP";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "tlep";
pub const HEADER_BYTES: usize = 29;
pub const STEP_BYTES: usize = 25;

pub fn encode(record: &EpisodeRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_BYTES + STEP_BYTES * record.steps.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&record.seed.to_le_bytes());
    out.push(record.theme.index());
    out.extend_from_slice(&record.config_hash.to_le_bytes());
    out.extend_from_slice(&(record.steps.len() as u32).to_le_bytes());
    for s in &record.steps {
        out.extend(s.action.iter().map(|&a| a as u8));
        out.extend_from_slice(&s.reward.to_le_bytes());
        out.push(u8::from(s.done));
        out.extend_from_slice(&s.floor.to_le_bytes());
        out.extend_from_slice(&s.position.x.to_le_bytes());
        out.extend_from_slice(&s.position.y.to_le_bytes());
        out.push(s.heading as u8);
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<EpisodeRecord> {
    let mut r = Reader::new(bytes, path);
    r.magic(MAGIC)?;
    r.version(VERSION)?;
    let seed = r.u64("seed")?;
    let at = r.offset();
    let theme_index = r.u8("theme")?;
    let Some(theme) = Theme::from_index(theme_index) else {
        return Err(crate::Error::Parse { path: path.into(), offset: at, message: format!("unknown theme index {theme_index}") });
    };
    let config_hash = r.u64("config hash")?;
    let count = r.u32("step count")? as usize;
    let mut steps = Vec::with_capacity(count.min(bytes.len() / STEP_BYTES));
    for i in 0..count {
        let at = r.offset();
        let mut action = [0usize; 3];
        for (b, a) in action.iter_mut().enumerate() {
            *a = usize::from(r.u8("action")?);
            if *a >= BRANCH_SIZES[b] {
                return Err(crate::Error::Parse {
                    path: path.into(),
                    offset: at + b as u64,
                    message: format!("step {i}: action index {a} out of range for branch {b}"),
                });
            }
        }
        let bad = |offset: u64, message: String| crate::Error::Parse { path: path.into(), offset, message };
        let reward = r.f64("reward")?;
        let done = match r.u8("done flag")? {
            0 => false,
            1 => true,
            v => return Err(bad(at + 11, format!("step {i}: done flag {v}"))),
        };
        let floor = r.u32("floor")?;
        let position = Pos::new(r.i32("x")?, r.i32("y")?);
        let v = r.u8("heading")?;
        let heading = Heading::from_u8(v).ok_or_else(|| bad(at + 24, format!("step {i}: heading {v}")))?;
        steps.push(RecordedStep { action, reward, done, floor, position, heading });
    }
    r.finish()?;
    Ok(EpisodeRecord { seed, theme, config_hash, steps })
}

pub fn write(path: &Path, record: &EpisodeRecord) -> Result<()> {
    fs::write(path, encode(record)).at(path)
}

pub fn read(path: &Path) -> Result<EpisodeRecord> {
    decode(&fs::read(path).at(path)?, path)
}

/// Recording files in `dir`, sorted by name.
pub fn list(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .at(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == EXTENSION))
        .collect();
    out.sort();
    Ok(out)
}
