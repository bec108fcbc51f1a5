//! Cached λ-returns for minibatched experience replay.
//!
//! The crate is organised around the pieces of a DQN(λ) training run:
//!
//! * [`env`]: small discrete environments, the observation window φ and
//!   wrappers for partial observability and reward clipping.
//! * [`returns`]: n-step and λ-return estimators (direct and recursive),
//!   Watkins trace cutting and dynamic λ selection.
//! * [`qfunc`]: tabular, linear and MLP action-value functions with an
//!   Adam/SGD optimizer.
//! * [`replay`]: the replay memory, the block-based λ-return cache and
//!   median-split prioritized sampling.
//! * [`agent`]: the DQN(λ) loop and the n-step target-network baseline.
//! * [`config`] and [`cli`]: run configuration files and the command-line
//!   front end.

pub mod agent;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod qfunc;
pub mod replay;
pub mod returns;

pub use error::{Error, Result};
