use serde::{Deserialize, Serialize};

use super::{Action, EnvId, Observation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Observation,
    pub terminated: bool,
    pub truncated: bool,
}

/// The ordered transitions of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub env: EnvId,
    pub seed: u64,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn new(env: EnvId, seed: u64) -> Self {
        Trajectory {
            env,
            seed,
            transitions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Sum of rewards in step order.
    pub fn undiscounted_return(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// Whether the last transition ended the episode.
    pub fn is_complete(&self) -> bool {
        self.transitions
            .last()
            .map(|t| t.terminated || t.truncated)
            .unwrap_or(false)
    }

    pub fn final_observation(&self) -> Option<Observation> {
        self.transitions.last().map(|t| t.next_obs)
    }
}
