use core::fmt;
use core::str::FromStr;

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Visual skin. Themes change pixels only, never dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theme {
    Ancient,
    Industrial,
    Modern,
    Moorish,
    Future,
}

impl Theme {
    pub const ALL: [Theme; 5] = [Theme::Ancient, Theme::Industrial, Theme::Modern, Theme::Moorish, Theme::Future];
    pub const TRAINING: [Theme; 3] = [Theme::Ancient, Theme::Industrial, Theme::Modern];
    pub const HELD_OUT: [Theme; 2] = [Theme::Moorish, Theme::Future];

    pub fn name(self) -> &'static str {
        match self {
            Theme::Ancient => "ancient",
            Theme::Industrial => "industrial",
            Theme::Modern => "modern",
            Theme::Moorish => "moorish",
            Theme::Future => "future",
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Theme> {
        Theme::ALL.get(usize::from(i)).copied()
    }
}

impl fmt::Display for Theme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Theme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Theme::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown theme `{s}`")))
    }
}
