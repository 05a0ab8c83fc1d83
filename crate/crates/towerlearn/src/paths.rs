//! Top-down path figures: one image per visited floor.
//!
//! Each grid cell is [`CELL`] pixels square. Walls are dark, walkable cells
//! light and gaps black. Every path point fills the cell's inner square
//! (inset [`INSET`] pixels) with its gradient color; later points overwrite
//! earlier ones. The gradient runs from pure red at the floor's first point
//! to pure blue at its last. Landmarks sit in the cell border, so the path
//! never hides them: the key is a gold frame, the locked door a pair of
//! sienna side bars and the exit a green frame.

use std::path::{Path, PathBuf};

use towerlearn_core::env::{generate_floor, CellKind, EnvConfig, FloorLayout, Pos};
use towerlearn_core::eval::{EpisodeRecord, PathPoint, PathTrace};

use crate::error::Result;
use crate::image::{Image, ImageFormat, Rgb};

pub const CELL: i64 = 12;
pub const INSET: i64 = 3;
pub const BORDER: i64 = 2;

pub const WALL: Rgb = [64, 64, 64];
pub const FLOOR: Rgb = [222, 222, 222];
pub const GAP: Rgb = [0, 0, 0];
pub const KEY: Rgb = [255, 200, 0];
pub const DOOR: Rgb = [160, 82, 45];
pub const EXIT: Rgb = [0, 170, 0];

/// Color of point `i` of `n`: red at 0, blue at `n - 1`.
pub fn gradient(i: usize, n: usize) -> Rgb {
    if n <= 1 {
        return [255, 0, 0];
    }
    let t = i as f64 / (n - 1) as f64;
    [(255.0 * (1.0 - t)).round() as u8, 0, (255.0 * t).round() as u8]
}

fn base_color(kind: CellKind) -> Rgb {
    match kind {
        CellKind::Wall => WALL,
        CellKind::Gap => GAP,
        _ => FLOOR,
    }
}

fn origin(p: Pos) -> (i64, i64) {
    (i64::from(p.x) * CELL, i64::from(p.y) * CELL)
}

/// Draws `points` (all on `layout`'s floor, in step order) over the layout.
pub fn render_floor(layout: &FloorLayout, points: &[PathPoint]) -> Image {
    let (w, h) = (layout.width as i64, layout.height as i64);
    let mut img = Image::new((w * CELL) as usize, (h * CELL) as usize, WALL);
    for y in 0..h {
        for x in 0..w {
            let p = Pos::new(x as i32, y as i32);
            let (ox, oy) = origin(p);
            img.fill_rect(ox, oy, CELL, CELL, base_color(layout.cell(p)));
        }
    }
    for (i, pt) in points.iter().enumerate() {
        let (ox, oy) = origin(pt.position);
        img.fill_rect(ox + INSET, oy + INSET, CELL - 2 * INSET, CELL - 2 * INSET, gradient(i, points.len()));
    }
    let frame = |img: &mut Image, p: Pos, c: Rgb| {
        let (ox, oy) = origin(p);
        for k in 0..BORDER {
            img.outline_rect(ox + k, oy + k, CELL - 2 * k, CELL - 2 * k, c);
        }
    };
    frame(&mut img, layout.exit, EXIT);
    if let Some(k) = layout.key {
        frame(&mut img, k, KEY);
    }
    if let Some(d) = layout.locked_door {
        let (ox, oy) = origin(d);
        img.fill_rect(ox, oy, BORDER, CELL, DOOR);
        img.fill_rect(ox + CELL - BORDER, oy, BORDER, CELL, DOOR);
    }
    img
}

/// One image per floor the episode visited, in floor order.
pub fn render_episode(record: &EpisodeRecord, config: &EnvConfig) -> Result<Vec<(u32, Image)>> {
    let trace = PathTrace::from_record(record, config)?;
    let mut out = Vec::new();
    for markers in &trace.floors {
        let layout = generate_floor(record.seed, markers.floor, &config.difficulty)?;
        let points: Vec<PathPoint> = trace.floor_points(markers.floor).copied().collect();
        out.push((markers.floor, render_floor(&layout, &points)));
    }
    Ok(out)
}

/// Writes `<stem>_floor<N>.<ext>` files into `out_dir`.
pub fn write_episode(record: &EpisodeRecord, config: &EnvConfig, out_dir: &Path, stem: &str, format: ImageFormat) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (floor, img) in render_episode(record, config)? {
        let path = out_dir.join(format!("{stem}_floor{floor}.{}", format.extension()));
        img.save(&path)?;
        written.push(path);
    }
    Ok(written)
}
