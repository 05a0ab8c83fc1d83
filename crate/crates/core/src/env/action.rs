use alloc::format;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Action counts per branch: movement, jump, rotation.
pub const BRANCH_SIZES: [usize; 3] = [2, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Movement {
    None,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Jump {
    None,
    Jump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rotation {
    None,
    Left,
    Right,
}

/// One choice from each action branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiDiscreteAction {
    pub movement: Movement,
    pub jump: Jump,
    pub rotation: Rotation,
}

impl MultiDiscreteAction {
    pub const NOOP: MultiDiscreteAction = MultiDiscreteAction {
        movement: Movement::None,
        jump: Jump::None,
        rotation: Rotation::None,
    };

    pub fn new(movement: Movement, jump: Jump, rotation: Rotation) -> Self {
        MultiDiscreteAction { movement, jump, rotation }
    }

    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        let &[m, j, r] = indices else {
            return Err(Error::usage(format!("expected 3 branch indices, got {}", indices.len())));
        };
        let movement = match m {
            0 => Movement::None,
            1 => Movement::Forward,
            _ => return Err(Error::usage(format!("movement index {m} out of range 0..2"))),
        };
        let jump = match j {
            0 => Jump::None,
            1 => Jump::Jump,
            _ => return Err(Error::usage(format!("jump index {j} out of range 0..2"))),
        };
        let rotation = match r {
            0 => Rotation::None,
            1 => Rotation::Left,
            2 => Rotation::Right,
            _ => return Err(Error::usage(format!("rotation index {r} out of range 0..3"))),
        };
        Ok(MultiDiscreteAction { movement, jump, rotation })
    }

    pub fn indices(&self) -> [usize; 3] {
        [self.movement as usize, self.jump as usize, self.rotation as usize]
    }

    pub fn forward(&self) -> bool {
        self.movement == Movement::Forward
    }

    pub fn jumping(&self) -> bool {
        self.jump == Jump::Jump
    }

    /// All 12 joint actions in index order.
    pub fn all() -> impl Iterator<Item = MultiDiscreteAction> {
        (0..BRANCH_SIZES.iter().product::<usize>()).map(|i| {
            Self::from_indices(&[i / 6, (i / 3) % 2, i % 3]).expect("in range")
        })
    }
}
