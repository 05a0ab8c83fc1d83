//! Allocation-only core of the towerlearn stack.
//!
//! Everything in here is deterministic computation over owned buffers: the
//! layer-wise reverse-mode tensor core ([`nn`]), the branched actor-critic
//! ([`model`]), the procedural tower environment ([`env`]) and its lockstep
//! vectorization ([`vec_env`]), the PPO machinery ([`ppo`]) and the episode
//! runner used for evaluation ([`eval`]). File formats, the CLI and anything
//! touching the clock live in the `towerlearn` crate.
//!
//! The crate is `no_std` + `alloc`. The default `std` feature only lets the
//! GEMM backend detect SIMD support at runtime.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod env;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod ppo;
pub mod rng;
pub mod vec_env;

pub use error::{Error, Result};
