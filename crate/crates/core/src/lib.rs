//! Sub-graph decomposed multi-agent reinforcement learning.
//!
//! The crate is `no_std` (it needs `alloc`). It carries the grid-world
//! scenarios, the agent interaction graph and its per-agent decomposition,
//! a small reverse-mode differentiation core with the message-passing
//! policy and critic networks, and the actor-critic / policy-gradient
//! trainers. File formats, the CLI and parallel batch execution live in
//! the companion `marl` crate.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

mod error;
pub mod graph;
pub mod gridworld;
pub mod nn;
pub mod rl;

pub use error::{Error, Result};
pub use gridworld::{Action, AgentId, GridWorld, Position, Scenario, ScenarioConfig};
