//! Files, figures and the command line around `towerlearn-core`.
//!
//! [`config`] resolves TOML run configurations over named presets,
//! [`checkpoint`] and [`recording`] define the binary formats, [`train`]
//! manages run directories, [`report`], [`paths`] and [`plot`] produce the
//! evaluation CSVs and figures, and [`cli`] wires it all into subcommands.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod image;
pub mod paths;
pub mod plot;
pub mod recording;
pub mod report;
pub mod train;

pub use error::{Error, Result};
