//! Multi-robot task allocation with a learned, size-independent critic.
//!
//! The crate bundles the moving-task world simulator, the perception graph
//! used to aggregate neighbor information, a small MLP library, the
//! centralized trainer, decentralized execution policies and the experiment
//! harness behind the `swarm-alloc` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod harness;
pub mod maddpg;
pub mod nn;
pub mod perception;
pub mod rng;
pub mod world;

pub use config::{Config, TrainerConfig, WorldConfig};
pub use error::{Error, Result};
