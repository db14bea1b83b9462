//! Cooperative MEC-assisted RAN slicing: a slot-level simulator and
//! actor-critic allocators built on a recurrent graph convolutional actor.
//!
//! Start with [`env::Environment`] for the dynamics, [`agent::train`] for
//! learning and [`harness::run_experiment`] for full comparisons.

pub mod agent;
pub mod autonet;
pub mod env;
pub mod harness;
pub mod topology;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/overview.md")]
mod book_overview {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/environment.md")]
mod book_environment {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/autonet.md")]
mod book_autonet {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/agents.md")]
mod book_agents {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
mod book_experiments {}
