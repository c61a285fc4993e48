//! Discrete-time vertiport traffic simulation with a reinforcement-learning
//! interface, a graph-convolutional PPO scheduler, and queue/random baselines.

pub mod agents;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod geom;
pub mod nn;
pub mod seed;
pub mod separation;
pub mod world;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
