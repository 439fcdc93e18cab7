//! Real-time recurrent reinforcement learning.
//!
//! A fully online actor-critic that trains a recurrent backbone (CT-RNN or
//! LRU) from a single stream of experience: forward-mode Jacobian traces
//! (exact RTRL, the local RFLO approximation, or exact diagonal RTRL for the
//! LRU) carry `dh/dtheta` alongside the hidden state, TD(lambda) eligibility
//! traces carry credit backward in time, and errors are routed into the
//! recurrent core either through the exact head weights or through fixed
//! random feedback matrices (feedback alignment).
//!
//! Layout mirrors the moving parts:
//! * [`cells`] — CT-RNN and LRU forward dynamics
//! * [`grad`] — online gradient engines and trace contraction
//! * [`ac`] — actor/critic heads, TD error, eligibility traces, optimizers
//! * [`envs`] — small deterministic POMDP benchmark environments
//! * [`agent`] — the per-step training loop, evaluation, seed sweeps
//! * [`oracles`] — independent reference implementations for tests
//! * [`verify`] — runnable property suite over engines and oracles
//! * [`io`] — metric sink and parameter snapshots
//! * [`config`] — run configuration and defaults

pub mod ac;
pub mod agent;
pub mod cells;
pub mod config;
pub mod envs;
pub mod error;
pub mod grad;
pub mod io;
pub mod math;
pub mod oracles;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
