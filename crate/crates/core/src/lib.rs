//! Age-of-information scheduling for a single shared uplink channel.
//!
//! The crate provides a slot-level simulator ([`engine`]), closed-form
//! Whittle indices ([`indices`]), relative value iteration oracles
//! ([`mdp`]), centralized scheduling policies ([`policies`]), the
//! index-prioritized random access protocol ([`access`]) and deadline
//! admission with periodic schedules ([`deadline`]).

pub mod access;
pub mod deadline;
pub mod engine;
pub mod error;
pub mod indices;
pub mod mdp;
pub mod metrics;
pub mod policies;
pub mod rng;
pub mod terminal;

pub use engine::{run_slots, BufferMode, Decision, Policy, SlotEngine, SlotView};
pub use error::{Error, Result};
pub use metrics::{AoiHistogram, ChannelStats, RunMetrics, TerminalMetrics};
pub use rng::{derive_seed, RngStream, RunRng, Stream};
pub use terminal::{Arrivals, TerminalSpec, TerminalState};
