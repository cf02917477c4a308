pub mod agents;
pub mod config;
pub mod error;
pub mod game;
pub mod log;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
