//! Multi-agent PPO: networks, policy heads, advantage estimation and trainers.

pub mod adam;
pub mod api;
pub mod checkpoint;
pub mod dist;
pub mod gae;
pub mod kl;
pub mod mlp;
pub mod ppo;
pub mod schedule;
pub mod trainer;
