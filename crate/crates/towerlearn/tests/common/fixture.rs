//! Hand-built floors and an independent per-pixel description of path figures.

use std::collections::HashMap;

use towerlearn::image::{Image, Rgb};
use towerlearn::paths::{DOOR, EXIT, FLOOR, GAP, KEY, WALL};
use towerlearn_core::env::{CellKind, FloorLayout, Pos};
use towerlearn_core::eval::PathPoint;

/// Walls around an open interior; `marks` overrides individual cells.
pub fn room(width: u32, height: u32, exit: Pos, marks: &[(Pos, CellKind)]) -> FloorLayout {
    let mut cells = Vec::new();
    for y in 0..height as i32 {
        for x in 0..width as i32 {
            let edge = x == 0 || y == 0 || x == width as i32 - 1 || y == height as i32 - 1;
            cells.push(if edge { CellKind::Wall } else { CellKind::Open });
        }
    }
    let mut layout = FloorLayout {
        seed: 0,
        floor: 0,
        width,
        height,
        cells,
        start: Pos::new(1, 1),
        exit,
        key: None,
        locked_door: None,
        gaps: Vec::new(),
    };
    let i = |p: Pos| (p.y as u32 * width + p.x as u32) as usize;
    layout.cells[i(exit)] = CellKind::Exit;
    for &(p, kind) in marks {
        layout.cells[i(p)] = kind;
        match kind {
            CellKind::Key => layout.key = Some(p),
            CellKind::LockedDoor => layout.locked_door = Some(p),
            CellKind::Gap => layout.gaps.push(p),
            _ => {}
        }
    }
    layout
}

pub fn points(cells: &[(i32, i32)]) -> Vec<PathPoint> {
    cells.iter().enumerate().map(|(step, &(x, y))| PathPoint { floor: 0, position: Pos::new(x, y), step: step as u32 }).collect()
}

/// Independent per-pixel description of the figure: a 12 px cell has a 2 px
/// landmark border and a 6x6 center square (pixels 3..9) for the path.
pub fn oracle(layout: &FloorLayout, colors: &HashMap<(i32, i32), Rgb>, x: usize, y: usize) -> Rgb {
    let cell = Pos::new((x / 12) as i32, (y / 12) as i32);
    let (lx, ly) = (x % 12, y % 12);
    let in_frame = !(2..10).contains(&lx) || !(2..10).contains(&ly);
    if layout.locked_door == Some(cell) && !(2..10).contains(&lx) {
        return DOOR;
    }
    if layout.key == Some(cell) && in_frame {
        return KEY;
    }
    if layout.exit == cell && in_frame {
        return EXIT;
    }
    if (3..9).contains(&lx) && (3..9).contains(&ly) {
        if let Some(&c) = colors.get(&(cell.x, cell.y)) {
            return c;
        }
    }
    match layout.cell(cell) {
        CellKind::Wall => WALL,
        CellKind::Gap => GAP,
        _ => FLOOR,
    }
}

pub fn assert_matches_oracle(img: &Image, layout: &FloorLayout, colors: &HashMap<(i32, i32), Rgb>) {
    assert_eq!((img.width, img.height), (layout.width as usize * 12, layout.height as usize * 12));
    for y in 0..img.height {
        for x in 0..img.width {
            assert_eq!(img.get(x, y), oracle(layout, colors, x, y), "pixel ({x}, {y})");
        }
    }
}

/// The L-shaped fixture: four points on a 5x4 room ending on the exit.
pub fn l_fixture() -> (FloorLayout, Vec<PathPoint>, HashMap<(i32, i32), Rgb>) {
    let layout = room(5, 4, Pos::new(3, 2), &[]);
    let colors = HashMap::from([
        ((1, 1), [255, 0, 0]),
        ((2, 1), [170, 0, 85]),
        ((3, 1), [85, 0, 170]),
        ((3, 2), [0, 0, 255]),
    ]);
    (layout, points(&[(1, 1), (2, 1), (3, 1), (3, 2)]), colors)
}

/// Pixels that differ from the oracle, as `(x, y, got, expected)`.
pub fn mismatches(img: &Image, layout: &FloorLayout, colors: &HashMap<(i32, i32), Rgb>) -> Vec<(usize, usize, Rgb, Rgb)> {
    let mut out = Vec::new();
    for y in 0..img.height {
        for x in 0..img.width {
            let want = oracle(layout, colors, x, y);
            if img.get(x, y) != want {
                out.push((x, y, img.get(x, y), want));
            }
        }
    }
    out
}
