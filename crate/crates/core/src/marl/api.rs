//! Interface between learners and multi-agent environments.

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Output heads of one agent: independent categoricals followed by a squashed Gaussian block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub categorical: Vec<usize>,
    pub continuous: usize,
}

impl HeadSpec {
    pub fn n_logits(&self) -> usize {
        self.categorical.iter().sum()
    }

    /// Width of the actor's output layer: all logits then one mean per continuous dimension.
    pub fn n_outputs(&self) -> usize {
        self.n_logits() + self.continuous
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub obs_dim: usize,
    pub heads: HeadSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentAction {
    pub discrete: Vec<usize>,
    /// Squashed into (−1, 1).
    pub continuous: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

pub trait MultiAgentEnv: Send {
    fn agent_specs(&self) -> Vec<AgentSpec>;
    fn reset(&mut self, episode_seed: u64) -> Result<Vec<Vec<f64>>>;
    fn step(&mut self, actions: &[AgentAction]) -> Result<Transition>;
}
