//! Decentralized goal assignment on grid worlds.
//!
//! Agents on an `n`×`n` grid each pick one of `k` goals. Every agent ranks
//! the goals on its own, rankings are exchanged, and conflicts go to the
//! lowest-numbered agent. The quality measure is the makespan: the time
//! until the last agent reaches its goal along a shortest path.
//!
//! This crate is `no_std` (it needs `alloc`) and holds the algorithmic
//! pieces: scenario model and generation ([`world`]), BFS ([`pathing`]),
//! centralized solvers ([`assignment`]), the episode driver ([`protocol`])
//! and the built-in decision-makers plus prompt handling ([`agents`]).
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod agents;
pub mod assignment;
pub mod pathing;
pub mod protocol;
pub mod world;

pub use agents::{Decision, DecisionMaker, DistanceRanker, ScriptedAgent, TeamOracle};
pub use assignment::{AgentId, Assignment, GoalLabel, Matching, Ranking};
pub use pathing::{Distance, DistanceMatrix, Path};
pub use protocol::{EpisodeConfig, EpisodeResult, Mode, Observation};
pub use world::{Position, Scenario, ScenarioDistribution};
