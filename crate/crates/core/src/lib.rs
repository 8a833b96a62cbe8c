//! Seeded simulator of a two-base-station cellular overload scenario.
//!
//! Each station is driven by a tabular Q-learning agent. Agents may consult an
//! advisor (a scripted rule table, a replay log, or a remote text-completion
//! service) whose suggestions are adopted through a per-agent trust score, and
//! may receive delayed rewards from a centralized alignment controller that
//! scores their recent history. The [`orchestrator`] runs the three
//! configurations (`marl-only`, `guided-marl`, `aura`) over traffic levels and
//! seeds, and [`stats`] applies Kruskal–Wallis and Dunn/Holm tests to the
//! resulting drop counts.

pub mod advisor;
pub mod agent;
pub mod alignment;
pub mod cli;
pub mod environment;
pub mod error;
pub mod orchestrator;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
