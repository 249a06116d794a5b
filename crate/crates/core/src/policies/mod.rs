//! Random and expert reference policies, exact tabular solvers, and dataset
//! generation.

mod tabular;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{action_space, reset, Action, ActionSpace, EnvError, EnvId, Observation, Trajectory, Transition};
use crate::seeding::{derive_seed, rng_from_seed, stream};

pub use tabular::{dealer_distribution, is_fixed_point, solve_tabular, state_index, tabular_policy, TabularPolicy, TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("observation does not belong to {0}")]
    ObservationEnvMismatch(EnvId),
    #[error("no tabular solution for {0}")]
    UnsupportedEnv(EnvId),
    #[error("observation outside the solved state space")]
    StateOutOfRange,
    #[error("dataset size must be at least 1")]
    EmptyDataset,
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    ScriptedExpert,
    TabularOptimal,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::ScriptedExpert => "scripted_expert",
            PolicyKind::TabularOptimal => "tabular_optimal",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "random" => Ok(PolicyKind::Random),
            "expert" | "scripted_expert" => Ok(PolicyKind::ScriptedExpert),
            "optimal" | "tabular" | "tabular_optimal" => Ok(PolicyKind::TabularOptimal),
            other => Err(format!("unknown policy '{other}'")),
        }
    }
}

/// Uniform over the discrete actions, or over [-1, 1] for continuous control.
pub fn random_action(env: EnvId, rng: &mut ChaCha8Rng) -> Action {
    match action_space(env) {
        ActionSpace::Discrete(n) => Action::Discrete(rng.gen_range(0..n)),
        ActionSpace::Continuous { low, high } => Action::Continuous(rng.gen_range(low..=high)),
    }
}

/// Scripted controllers for the continuous-state environments and the
/// cliff; the other finite environments use the solved tabular policy.
pub fn expert_action(env: EnvId, obs: &Observation) -> Result<Action, PolicyError> {
    if !obs.matches(env) {
        return Err(PolicyError::ObservationEnvMismatch(env));
    }
    let action = match (env, *obs) {
        (EnvId::Cliffwalking, Observation::CliffWalking { row, col }) => {
            if row == 3 && col == 0 {
                Action::Discrete(0)
            } else if col < 11 {
                Action::Discrete(1)
            } else {
                Action::Discrete(2)
            }
        }
        (EnvId::Cartpole, Observation::CartPole { theta, omega, .. }) => {
            Action::Discrete(if theta + 0.5 * omega > 0.0 { 1 } else { 0 })
        }
        (EnvId::Mountaincar, Observation::MountainCar { v, .. }) => {
            Action::Discrete(if v >= 0.0 { 2 } else { 0 })
        }
        (EnvId::MountaincarContinuous, Observation::MountainCar { v, .. }) => {
            Action::Continuous(if v >= 0.0 { 1.0 } else { -1.0 })
        }
        (env, obs) => Action::Discrete(tabular_policy(env)?.action(&obs)?),
    };
    Ok(action)
}

/// Roll out one episode, choosing actions with `policy`.
pub fn rollout(
    env: EnvId,
    seed: u64,
    step_cap: u32,
    mut policy: impl FnMut(&Observation) -> Result<Action, PolicyError>,
) -> Result<Trajectory, PolicyError> {
    let (mut instance, mut obs) = reset(env, seed, step_cap)?;
    let mut traj = Trajectory::new(env, seed);
    loop {
        let action = policy(&obs)?;
        let step = instance.step(action)?;
        traj.transitions.push(Transition {
            obs,
            action,
            reward: step.reward,
            next_obs: step.observation,
            terminated: step.terminated,
            truncated: step.truncated,
        });
        obs = step.observation;
        if step.done() {
            return Ok(traj);
        }
    }
}

/// Environment seed of episode `index` in a dataset generated from `seed`.
pub fn dataset_episode_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, stream::DATASET, index)
}

/// `n` seeded rollouts of `kind` on `env`.
pub fn generate_dataset(
    kind: PolicyKind,
    env: EnvId,
    n: usize,
    seed: u64,
    step_cap: u32,
) -> Result<Vec<Trajectory>, PolicyError> {
    if n == 0 {
        return Err(PolicyError::EmptyDataset);
    }
    if kind == PolicyKind::TabularOptimal {
        tabular_policy(env)?;
    }
    (0..n as u64)
        .map(|i| {
            let env_seed = dataset_episode_seed(seed, i);
            let mut rng = rng_from_seed(derive_seed(seed, stream::POLICY, i));
            rollout(env, env_seed, step_cap, |obs| match kind {
                PolicyKind::Random => Ok(random_action(env, &mut rng)),
                PolicyKind::ScriptedExpert => expert_action(env, obs),
                PolicyKind::TabularOptimal => Ok(Action::Discrete(tabular_policy(env)?.action(obs)?)),
            })
        })
        .collect()
}
