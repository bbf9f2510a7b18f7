pub mod cli;
pub mod config;
pub mod detector;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod link_abstraction;
pub mod marl;
pub mod propagation;
pub mod radio_env;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
