//! Egocentric top-down rasterizer.
//!
//! The view is a square window of `2r + 1` cells centred on the agent and
//! rotated so the agent always faces up. Each cell is a block of
//! `side / (2r + 1)` pixels; leftover pixels on the bottom and right edges
//! take the theme's void colour. Every theme supplies its own colours and
//! floor/wall texture, so the same state renders differently per theme.

use alloc::vec;
use alloc::vec::Vec;

use super::layout::{CellKind, FloorLayout, Heading, Pos};
use super::theme::Theme;

pub type Rgb = [u8; 3];

/// Texture applied to open floor and walls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Flat,
    Checker,
    Stripes,
    Bricks,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Palette {
    pub void: Rgb,
    pub wall: Rgb,
    pub floor: Rgb,
    pub gap: Rgb,
    pub door: Rgb,
    pub locked_door: Rgb,
    pub key: Rgb,
    pub orb: Rgb,
    pub start: Rgb,
    pub exit: Rgb,
    pub agent: Rgb,
    pub pattern: Pattern,
    /// Signed brightness swing of the texture.
    pub contrast: i16,
}

impl Palette {
    pub fn of(theme: Theme) -> Palette {
        match theme {
            // Everything in low-contrast browns.
            Theme::Ancient => Palette {
                void: [40, 30, 20],
                wall: [96, 74, 52],
                floor: [128, 101, 72],
                gap: [52, 40, 28],
                door: [142, 112, 78],
                locked_door: [110, 80, 50],
                key: [176, 144, 84],
                orb: [150, 128, 96],
                start: [134, 106, 76],
                exit: [166, 138, 92],
                agent: [190, 160, 120],
                pattern: Pattern::Bricks,
                contrast: 6,
            },
            Theme::Industrial => Palette {
                void: [20, 20, 24],
                wall: [88, 92, 98],
                floor: [140, 142, 146],
                gap: [34, 30, 28],
                door: [170, 120, 60],
                locked_door: [200, 70, 40],
                key: [250, 200, 30],
                orb: [80, 200, 220],
                start: [150, 150, 156],
                exit: [60, 200, 90],
                agent: [240, 240, 240],
                pattern: Pattern::Grid,
                contrast: 14,
            },
            Theme::Modern => Palette {
                void: [225, 230, 235],
                wall: [70, 90, 140],
                floor: [236, 236, 240],
                gap: [30, 40, 70],
                door: [150, 190, 230],
                locked_door: [220, 60, 90],
                key: [255, 210, 0],
                orb: [0, 170, 255],
                start: [225, 225, 232],
                exit: [30, 180, 120],
                agent: [255, 90, 40],
                pattern: Pattern::Flat,
                contrast: 0,
            },
            Theme::Moorish => Palette {
                void: [60, 20, 30],
                wall: [30, 110, 110],
                floor: [210, 180, 120],
                gap: [20, 40, 60],
                door: [180, 60, 60],
                locked_door: [120, 30, 90],
                key: [240, 240, 200],
                orb: [250, 120, 160],
                start: [200, 170, 115],
                exit: [250, 200, 60],
                agent: [30, 40, 200],
                pattern: Pattern::Checker,
                contrast: 22,
            },
            Theme::Future => Palette {
                void: [5, 5, 12],
                wall: [20, 24, 60],
                floor: [30, 34, 44],
                gap: [0, 0, 0],
                door: [0, 255, 200],
                locked_door: [255, 0, 200],
                key: [255, 255, 120],
                orb: [120, 255, 60],
                start: [36, 40, 52],
                exit: [255, 120, 0],
                agent: [0, 200, 255],
                pattern: Pattern::Stripes,
                contrast: 18,
            },
        }
    }

    pub fn color(&self, kind: CellKind) -> Rgb {
        match kind {
            CellKind::Wall => self.wall,
            CellKind::Open => self.floor,
            CellKind::Gap => self.gap,
            CellKind::Door => self.door,
            CellKind::LockedDoor => self.locked_door,
            CellKind::Key => self.key,
            CellKind::Orb => self.orb,
            CellKind::Start => self.start,
            CellKind::Exit => self.exit,
        }
    }
}

/// Agent pose for rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct View {
    pub position: Pos,
    pub heading: Heading,
    pub radius: u32,
}

fn shade(c: Rgb, delta: i16) -> Rgb {
    let f = |v: u8| (i16::from(v) + delta).clamp(0, 255) as u8;
    [f(c[0]), f(c[1]), f(c[2])]
}

fn texture(p: &Palette, world: Pos, u: usize, v: usize, cell: usize) -> i16 {
    let on = match p.pattern {
        Pattern::Flat => false,
        Pattern::Checker => (world.x + world.y) & 1 == 0,
        Pattern::Stripes => (u + v) % 4 < 2,
        Pattern::Bricks => {
            let shift = if (v * 2 / cell.max(1)) % 2 == 0 { 0 } else { cell / 2 };
            v % (cell / 2).max(1) == 0 || (u + shift) % cell.max(1) == 0
        }
        Pattern::Grid => u == 0 || v == 0,
    };
    if on {
        p.contrast
    } else {
        -p.contrast / 2
    }
}

/// Pixel colour of cell `kind` at in-cell coordinates `(u, v)`.
fn cell_pixel(p: &Palette, kind: CellKind, world: Pos, u: usize, v: usize, cell: usize) -> Rgb {
    let c = cell as i32;
    let (x, y) = (u as i32 * 2 + 1 - c, v as i32 * 2 + 1 - c); // centred, doubled coordinates
    let floor = shade(p.floor, texture(p, world, u, v, cell));
    match kind {
        CellKind::Wall => shade(p.wall, texture(p, world, u, v, cell)),
        CellKind::Open | CellKind::Start => shade(p.color(kind), texture(p, world, u, v, cell)),
        CellKind::Gap => p.gap,
        // Diamond on floor.
        CellKind::Key => {
            if x.abs() + y.abs() <= c - 1 {
                p.key
            } else {
                floor
            }
        }
        // Disc on floor.
        CellKind::Orb => {
            if x * x + y * y <= (c - 2) * (c - 2) {
                p.orb
            } else {
                floor
            }
        }
        // Door frame around floor.
        CellKind::Door => {
            if u == 0 || v == 0 || u + 1 == cell || v + 1 == cell {
                p.door
            } else {
                floor
            }
        }
        // Solid with bars.
        CellKind::LockedDoor => {
            if u % 2 == 0 {
                p.locked_door
            } else {
                shade(p.locked_door, -40)
            }
        }
        CellKind::Exit => {
            if u == 0 || v == 0 || u + 1 == cell || v + 1 == cell {
                shade(p.exit, -50)
            } else {
                p.exit
            }
        }
    }
}

/// Renders an `side x side x 3` RGB image.
pub fn render(layout: &FloorLayout, view: View, theme: Theme, height: usize, width: usize) -> Vec<u8> {
    let palette = Palette::of(theme);
    let span = 2 * view.radius as usize + 1;
    let cell = (height.min(width) / span).max(1);
    let mut img = vec![0u8; height * width * 3];
    for px in img.chunks_exact_mut(3) {
        px.copy_from_slice(&palette.void);
    }
    let (fx, fy) = view.heading.delta();
    let (rx, ry) = view.heading.right().delta();
    let r = view.radius as i32;
    for vy in 0..span.min(height / cell) {
        for vx in 0..span.min(width / cell) {
            let ahead = r - vy as i32;
            let side = vx as i32 - r;
            let world = view.position.offset(ahead * fx + side * rx, ahead * fy + side * ry);
            let kind = layout.cell(world);
            let is_agent = ahead == 0 && side == 0;
            for v in 0..cell {
                for u in 0..cell {
                    let mut color = cell_pixel(&palette, kind, world, u, v, cell);
                    if is_agent && agent_mask(u, v, cell) {
                        color = palette.agent;
                    }
                    let (py, px) = (vy * cell + v, vx * cell + u);
                    img[(py * width + px) * 3..][..3].copy_from_slice(&color);
                }
            }
        }
    }
    img
}

/// Upward-pointing triangle inside the agent's cell.
fn agent_mask(u: usize, v: usize, cell: usize) -> bool {
    let (c, u, v) = (cell as i32, u as i32, v as i32);
    let half_width = v / 2;
    v >= 1 && v < c - 1 && (u - c / 2).abs() <= half_width
}
