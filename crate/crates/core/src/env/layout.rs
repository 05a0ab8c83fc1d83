//! Seeded floor generation.
//!
//! A floor is a chain of square rooms placed on a coarse grid of room slots
//! by a self-avoiding random walk. Consecutive rooms share a wall with one
//! doorway. Later floors get more rooms, then a locked door whose key lies
//! in an earlier room, then a gap in a doorway that must be jumped, then a
//! two-cell gap that needs jumping on consecutive ticks.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, StreamRng};
use crate::{Error, Result};

/// Attempts before generation is declared failed.
pub const MAX_GENERATION_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellKind {
    Wall = 0,
    Open = 1,
    Gap = 2,
    /// An open doorway.
    Door = 3,
    LockedDoor = 4,
    Key = 5,
    Orb = 6,
    Start = 7,
    Exit = 8,
}

impl CellKind {
    pub const ALL: [CellKind; 9] = [
        CellKind::Wall,
        CellKind::Open,
        CellKind::Gap,
        CellKind::Door,
        CellKind::LockedDoor,
        CellKind::Key,
        CellKind::Orb,
        CellKind::Start,
        CellKind::Exit,
    ];

    pub fn from_u8(v: u8) -> Option<CellKind> {
        CellKind::ALL.get(usize::from(v)).copied()
    }

    /// Cells an agent can end a tick on, ignoring the locked-door rule.
    pub fn is_floor(self) -> bool {
        !matches!(self, CellKind::Wall | CellKind::Gap | CellKind::LockedDoor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Pos {
        Pos { x: self.x + dx, y: self.y + dy }
    }

    pub fn step(self, heading: Heading) -> Pos {
        let (dx, dy) = heading.delta();
        self.offset(dx, dy)
    }

    /// Chebyshev distance.
    pub fn chebyshev(self, other: Pos) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

/// Cardinal heading; `y` grows downward (south).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Heading {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }

    pub fn left(self) -> Heading {
        Heading::ALL[(self as usize + 3) % 4]
    }

    pub fn right(self) -> Heading {
        Heading::ALL[(self as usize + 1) % 4]
    }

    pub fn from_u8(v: u8) -> Option<Heading> {
        Heading::ALL.get(usize::from(v)).copied()
    }
}

/// Floor-dependent generator settings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifficultyConfig {
    /// Number of floors; completing the last one ends the episode.
    pub floor_cap: u32,
    /// First floor with a key and a locked door.
    pub key_intro_floor: u32,
    /// First floor with a one-cell gap in a doorway.
    pub gap_intro_floor: u32,
    /// First floor whose gap is two cells long.
    pub double_gap_floor: u32,
    /// Interior side length of a room.
    pub room_size: u32,
    /// Side length of the grid of room slots.
    pub room_grid: u32,
    /// Rooms on floor 0.
    pub base_rooms: u32,
    /// One more room every this many floors.
    pub floors_per_extra_room: u32,
    /// Time orbs on every floor from 1 up.
    pub orbs_per_floor: u32,
}

impl Default for DifficultyConfig {
    fn default() -> Self {
        DifficultyConfig {
            floor_cap: 10,
            key_intro_floor: 2,
            gap_intro_floor: 4,
            double_gap_floor: 7,
            room_size: 5,
            room_grid: 3,
            base_rooms: 2,
            floors_per_extra_room: 3,
            orbs_per_floor: 1,
        }
    }
}

impl DifficultyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.floor_cap == 0 {
            return Err(Error::config("difficulty.floor_cap must be at least 1"));
        }
        if self.room_size < 3 {
            return Err(Error::config("difficulty.room_size must be at least 3"));
        }
        if self.room_grid < 2 || self.room_grid > 16 {
            return Err(Error::config("difficulty.room_grid must be within 2..=16"));
        }
        if self.base_rooms == 0 || self.base_rooms > self.room_grid * self.room_grid {
            return Err(Error::config("difficulty.base_rooms must be within 1..=room_grid^2"));
        }
        if self.floors_per_extra_room == 0 {
            return Err(Error::config("difficulty.floors_per_extra_room must be positive"));
        }
        Ok(())
    }

    pub fn rooms_on_floor(&self, floor: u32) -> u32 {
        (self.base_rooms + floor / self.floors_per_extra_room).min(self.room_grid * self.room_grid)
    }

    pub fn grid_side(&self) -> u32 {
        self.room_grid * (self.room_size + 1) + 1
    }
}

/// Deterministic description of one floor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FloorLayout {
    pub seed: u64,
    pub floor: u32,
    pub width: u32,
    pub height: u32,
    /// Row-major cell kinds.
    pub cells: Vec<CellKind>,
    pub start: Pos,
    pub exit: Pos,
    pub key: Option<Pos>,
    pub locked_door: Option<Pos>,
    /// Gap cells, in crossing order.
    pub gaps: Vec<Pos>,
}

impl FloorLayout {
    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as u32) < self.width && (p.y as u32) < self.height
    }

    /// Out-of-bounds cells read as walls.
    pub fn cell(&self, p: Pos) -> CellKind {
        if self.in_bounds(p) {
            self.cells[p.y as usize * self.width as usize + p.x as usize]
        } else {
            CellKind::Wall
        }
    }

    pub fn set(&mut self, p: Pos, kind: CellKind) {
        if self.in_bounds(p) {
            self.cells[p.y as usize * self.width as usize + p.x as usize] = kind;
        }
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.cells.iter().filter(|&&c| c == kind).count()
    }

    pub fn grid_bytes(&self) -> Vec<u8> {
        self.cells.iter().map(|&c| c as u8).collect()
    }
}

/// Whether `to` can be entered, given key possession.
fn enterable(kind: CellKind, has_key: bool) -> bool {
    kind.is_floor() || (kind == CellKind::LockedDoor && has_key)
}

/// Moves available from a standable cell: a plain step, or a straight jump
/// over one or two gap cells onto an enterable cell.
pub fn successors(layout: &FloorLayout, from: Pos, has_key: bool) -> impl Iterator<Item = Pos> + '_ {
    Heading::ALL.into_iter().filter_map(move |h| {
        let n1 = from.step(h);
        let k1 = layout.cell(n1);
        if enterable(k1, has_key) {
            return Some(n1);
        }
        if k1 != CellKind::Gap {
            return None;
        }
        let n2 = n1.step(h);
        let k2 = layout.cell(n2);
        if enterable(k2, has_key) {
            return Some(n2);
        }
        if k2 != CellKind::Gap {
            return None;
        }
        let n3 = n2.step(h);
        enterable(layout.cell(n3), has_key).then_some(n3)
    })
}

/// Breadth-first search over `(position, has_key)` from start to exit.
/// Returns the number of moves on a shortest route.
pub fn shortest_route(layout: &FloorLayout) -> Option<usize> {
    let (w, h) = (layout.width as usize, layout.height as usize);
    let index = |p: Pos, k: bool| (p.y as usize * w + p.x as usize) * 2 + usize::from(k);
    let mut seen = vec![false; w * h * 2];
    let mut queue = VecDeque::new();
    let start_key = layout.cell(layout.start) == CellKind::Key;
    seen[index(layout.start, start_key)] = true;
    queue.push_back((layout.start, start_key, 0usize));
    while let Some((p, has_key, dist)) = queue.pop_front() {
        if p == layout.exit {
            return Some(dist);
        }
        for n in successors(layout, p, has_key) {
            let k = has_key || layout.cell(n) == CellKind::Key;
            let i = index(n, k);
            if !seen[i] {
                seen[i] = true;
                queue.push_back((n, k, dist + 1));
            }
        }
    }
    None
}

pub fn is_solvable(layout: &FloorLayout) -> bool {
    shortest_route(layout).is_some()
}

struct Room {
    slot: (u32, u32),
}

struct Connection {
    door: Pos,
    /// Direction of travel from the earlier room into the later one.
    heading: Heading,
}

/// Generates floor `floor` of tower `seed`.
pub fn generate_floor(seed: u64, floor: u32, config: &DifficultyConfig) -> Result<FloorLayout> {
    config.validate()?;
    if floor >= config.floor_cap {
        return Err(Error::usage(format!("floor {floor} is beyond the floor cap {}", config.floor_cap)));
    }
    let mut rng = StreamRng::seed_from_u64(derive_seed(seed, "floor", u64::from(floor)));
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        if let Some(layout) = try_generate(seed, floor, config, &mut rng) {
            if is_solvable(&layout) {
                return Ok(layout);
            }
        }
    }
    Err(Error::Internal(format!(
        "no solvable layout for seed {seed} floor {floor} after {MAX_GENERATION_ATTEMPTS} attempts"
    )))
}

fn room_walk(config: &DifficultyConfig, rooms: u32, rng: &mut StreamRng) -> Option<Vec<Room>> {
    let g = config.room_grid as i32;
    let mut slots = vec![(rng.random_range(0..g), rng.random_range(0..g))];
    while slots.len() < rooms as usize {
        let &(x, y) = slots.last().expect("non-empty");
        let options: Vec<(i32, i32)> = Heading::ALL
            .iter()
            .map(|h| {
                let (dx, dy) = h.delta();
                (x + dx, y + dy)
            })
            .filter(|&(nx, ny)| nx >= 0 && ny >= 0 && nx < g && ny < g && !slots.contains(&(nx, ny)))
            .collect();
        if options.is_empty() {
            return None;
        }
        slots.push(options[rng.random_range(0..options.len())]);
    }
    Some(slots.into_iter().map(|(x, y)| Room { slot: (x as u32, y as u32) }).collect())
}

fn try_generate(seed: u64, floor: u32, config: &DifficultyConfig, rng: &mut StreamRng) -> Option<FloorLayout> {
    let side = config.grid_side();
    let s = config.room_size as i32;
    let mut layout = FloorLayout {
        seed,
        floor,
        width: side,
        height: side,
        cells: vec![CellKind::Wall; (side * side) as usize],
        start: Pos::new(0, 0),
        exit: Pos::new(0, 0),
        key: None,
        locked_door: None,
        gaps: Vec::new(),
    };
    let rooms = room_walk(config, config.rooms_on_floor(floor), rng)?;
    let origin = |room: &Room| Pos::new(room.slot.0 as i32 * (s + 1) + 1, room.slot.1 as i32 * (s + 1) + 1);
    let interior = |room: &Room| {
        let o = origin(room);
        (0..s).flat_map(move |dy| (0..s).map(move |dx| o.offset(dx, dy)))
    };
    for room in &rooms {
        for p in interior(room) {
            layout.set(p, CellKind::Open);
        }
    }

    let mut connections = Vec::new();
    for pair in rooms.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (ax, ay) = (a.slot.0 as i32, a.slot.1 as i32);
        let (bx, by) = (b.slot.0 as i32, b.slot.1 as i32);
        let along = rng.random_range(0..s);
        let heading = match (bx - ax, by - ay) {
            (1, 0) => Heading::East,
            (-1, 0) => Heading::West,
            (0, 1) => Heading::South,
            _ => Heading::North,
        };
        let door = match heading {
            Heading::East => Pos::new(bx * (s + 1), ay * (s + 1) + 1 + along),
            Heading::West => Pos::new(ax * (s + 1), ay * (s + 1) + 1 + along),
            Heading::South => Pos::new(ax * (s + 1) + 1 + along, by * (s + 1)),
            Heading::North => Pos::new(ax * (s + 1) + 1 + along, ay * (s + 1)),
        };
        layout.set(door, CellKind::Door);
        connections.push(Connection { door, heading });
    }

    // Cells that must stay plain floor: both sides of every doorway, and the
    // landing cells beyond a gap.
    let mut reserved: Vec<Pos> = Vec::new();
    for c in &connections {
        reserved.push(c.door.step(c.heading));
        reserved.push(c.door.step(c.heading.left().left()));
    }

    let locked_index = (floor >= config.key_intro_floor && !connections.is_empty())
        .then(|| rng.random_range(0..connections.len()));
    let gap_index = if floor >= config.gap_intro_floor && !connections.is_empty() {
        let candidates: Vec<usize> = (0..connections.len()).filter(|&i| Some(i) != locked_index).collect();
        if candidates.is_empty() {
            None
        } else {
            Some(candidates[rng.random_range(0..candidates.len())])
        }
    } else {
        None
    };

    if let Some(i) = gap_index {
        let c = &connections[i];
        layout.set(c.door, CellKind::Gap);
        layout.gaps.push(c.door);
        let inner = c.door.step(c.heading);
        if floor >= config.double_gap_floor {
            layout.set(inner, CellKind::Gap);
            layout.gaps.push(inner);
            reserved.push(inner.step(c.heading));
        }
    }

    let free_in = |layout: &FloorLayout, room_ids: &[usize], reserved: &[Pos], rng: &mut StreamRng| {
        let cells: Vec<Pos> = room_ids
            .iter()
            .flat_map(|&r| interior(&rooms[r]))
            .filter(|&p| layout.cell(p) == CellKind::Open && !reserved.contains(&p))
            .collect();
        (!cells.is_empty()).then(|| cells[rng.random_range(0..cells.len())])
    };

    let last = rooms.len() - 1;
    let start = free_in(&layout, &[0], &reserved, rng)?;
    layout.set(start, CellKind::Start);
    layout.start = start;
    let exit = free_in(&layout, &[last], &reserved, rng)?;
    layout.set(exit, CellKind::Exit);
    layout.exit = exit;

    if let Some(i) = locked_index {
        let c = &connections[i];
        layout.set(c.door, CellKind::LockedDoor);
        layout.locked_door = Some(c.door);
        let before: Vec<usize> = (0..=i).collect();
        let key = free_in(&layout, &before, &reserved, rng)?;
        layout.set(key, CellKind::Key);
        layout.key = Some(key);
    }

    if floor >= 1 {
        let all: Vec<usize> = (0..rooms.len()).collect();
        for _ in 0..config.orbs_per_floor {
            if let Some(p) = free_in(&layout, &all, &reserved, rng) {
                layout.set(p, CellKind::Orb);
            }
        }
    }
    Some(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config() -> DifficultyConfig {
        DifficultyConfig::default()
    }

    #[test]
    fn identical_seed_and_floor_give_identical_grids() {
        for floor in 0..10 {
            let a = generate_floor(99, floor, &config()).unwrap();
            let b = generate_floor(99, floor, &config()).unwrap();
            assert_eq!(a.grid_bytes(), b.grid_bytes());
            assert_eq!(a, b);
        }
        assert_ne!(
            generate_floor(1, 3, &config()).unwrap().grid_bytes(),
            generate_floor(2, 3, &config()).unwrap().grid_bytes()
        );
    }

    #[test]
    fn floors_below_key_intro_have_no_key_puzzle() {
        let cfg = config();
        for seed in 0..300 {
            for floor in 0..cfg.key_intro_floor {
                let l = generate_floor(seed, floor, &cfg).unwrap();
                assert_eq!(l.count(CellKind::Key), 0);
                assert_eq!(l.count(CellKind::LockedDoor), 0);
            }
        }
    }

    #[test]
    fn puzzles_appear_from_their_intro_floors() {
        let cfg = config();
        for seed in 0..100 {
            let key = generate_floor(seed, cfg.key_intro_floor, &cfg).unwrap();
            assert_eq!(key.count(CellKind::Key), 1);
            assert_eq!(key.count(CellKind::LockedDoor), 1);
            let gap = generate_floor(seed, cfg.gap_intro_floor, &cfg).unwrap();
            assert_eq!(gap.count(CellKind::Gap), 1);
            let double = generate_floor(seed, cfg.double_gap_floor, &cfg).unwrap();
            assert_eq!(double.count(CellKind::Gap), 2);
        }
    }

    #[test]
    fn floor_cap_is_enforced() {
        assert!(matches!(generate_floor(0, 10, &config()), Err(Error::Usage(_))));
    }

    #[test]
    fn locked_door_needs_the_key() {
        let cfg = config();
        let mut layout = generate_floor(5, cfg.key_intro_floor, &cfg).unwrap();
        let key = layout.key.unwrap();
        layout.set(key, CellKind::Open);
        layout.key = None;
        assert!(!is_solvable(&layout), "exit reachable without the key");
    }

    #[test]
    fn gaps_cannot_be_walked_around() {
        let cfg = config();
        let layout = generate_floor(8, cfg.double_gap_floor, &cfg).unwrap();
        let mut walled = layout.clone();
        for &g in &layout.gaps {
            walled.set(g, CellKind::Wall);
        }
        assert!(!is_solvable(&walled));
        // Two gap cells in a line; a three-cell jump is not possible.
        let mut longer = layout.clone();
        let (a, b) = (layout.gaps[0], layout.gaps[1]);
        let beyond = b.offset(b.x - a.x, b.y - a.y);
        longer.set(beyond, CellKind::Gap);
        if longer.exit != beyond {
            assert!(!is_solvable(&longer));
        }
    }

    #[test]
    fn rooms_grow_with_floor() {
        let cfg = config();
        assert_eq!(cfg.rooms_on_floor(0), 2);
        assert_eq!(cfg.rooms_on_floor(3), 3);
        assert_eq!(cfg.rooms_on_floor(9), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn every_generated_floor_is_solvable(seed in any::<u64>(), floor in 0u32..10) {
            let layout = generate_floor(seed, floor, &config()).unwrap();
            prop_assert!(is_solvable(&layout));
            prop_assert_eq!(layout.cell(layout.start), CellKind::Start);
            prop_assert_eq!(layout.cell(layout.exit), CellKind::Exit);
        }
    }
}
