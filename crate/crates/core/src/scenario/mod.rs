//! The five domain-knowledge levels and the loops that run an agent under
//! each of them.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentError, Episode};
use crate::dataset::{read_file, DatasetError};
use crate::env::{reset, EnvError, EnvId, Trajectory, Transition, DEFAULT_STEP_CAP};
use crate::evaluation::{blackjack_agreement_score, EvalError, RunRecord, RunStatus, BLACKJACK_GROUP};
use crate::llm::{LlmError, LlmGateway};
use crate::policies::{tabular_policy, PolicyError, PolicyKind};
use crate::seeding::{derive_seed, stream};

/// Episodes in a self-guided (lv3) run.
pub const DEFAULT_EPISODES: usize = 5;
/// Trajectories in an offline (lv2/lv4) dataset.
pub const DATASET_SIZE: usize = 5;
/// Base seed of the shipped datasets.
pub const DATASET_SEED: u64 = 0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("missing asset {0}")]
    MissingAsset(PathBuf),
    #[error("dataset {path} is for {found}, expected {expected}")]
    DatasetEnvMismatch { path: PathBuf, expected: EnvId, found: EnvId },
    #[error("dataset {path}: expected {expected} trajectories, found {found}")]
    DatasetSize { path: PathBuf, expected: usize, found: usize },
    #[error("episode budget must be at least 1")]
    NoEpisodes,
    #[error("{0} needs a dataset")]
    DatasetRequired(ScenarioLevel),
    #[error("lv5 needs expert knowledge")]
    KnowledgeRequired,
    #[error("agent is bound to {agent}, scenario to {scenario}")]
    AgentEnvMismatch { agent: EnvId, scenario: EnvId },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ScenarioError {
    /// Whether the run stopped because the shared token budget ran out.
    pub fn is_budget_exceeded(&self) -> bool {
        matches!(self, ScenarioError::Agent(AgentError::Llm(LlmError::BudgetExceeded(_))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioLevel {
    Lv1,
    Lv2,
    Lv3,
    Lv4,
    Lv5,
}

impl ScenarioLevel {
    pub const ALL: [ScenarioLevel; 5] = [
        ScenarioLevel::Lv1,
        ScenarioLevel::Lv2,
        ScenarioLevel::Lv3,
        ScenarioLevel::Lv4,
        ScenarioLevel::Lv5,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioLevel::Lv1 => "lv1",
            ScenarioLevel::Lv2 => "lv2",
            ScenarioLevel::Lv3 => "lv3",
            ScenarioLevel::Lv4 => "lv4",
            ScenarioLevel::Lv5 => "lv5",
        }
    }

    /// The policy that generated this level's offline dataset.
    pub fn dataset_policy(&self) -> Option<PolicyKind> {
        match self {
            ScenarioLevel::Lv2 => Some(PolicyKind::Random),
            ScenarioLevel::Lv4 => Some(PolicyKind::ScriptedExpert),
            _ => None,
        }
    }
}

impl fmt::Display for ScenarioLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lv1" | "1" => Ok(ScenarioLevel::Lv1),
            "lv2" | "2" => Ok(ScenarioLevel::Lv2),
            "lv3" | "3" => Ok(ScenarioLevel::Lv3),
            "lv4" | "4" => Ok(ScenarioLevel::Lv4),
            "lv5" | "5" => Ok(ScenarioLevel::Lv5),
            other => Err(format!("unknown level '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub level: ScenarioLevel,
    pub env: EnvId,
    pub episodes: usize,
    pub dataset: Option<PathBuf>,
    pub expert_prompt: Option<PathBuf>,
    pub seed: u64,
    pub step_cap: u32,
}

/// Directory of the assets shipped with this crate.
pub fn default_assets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets")
}

pub fn dataset_path(assets_dir: &Path, env: EnvId, policy: PolicyKind) -> PathBuf {
    let tag = match policy {
        PolicyKind::Random => "random",
        _ => "expert",
    };
    assets_dir.join("datasets").join(format!("{}_{tag}.jsonl", env.as_str()))
}

pub fn expert_prompt_path(assets_dir: &Path, env: EnvId) -> PathBuf {
    assets_dir.join("expert_prompts").join(format!("{}.txt", env.as_str()))
}

/// Resolve and validate the assets a level needs.
pub fn make_scenario(level: ScenarioLevel, env: EnvId, assets_dir: &Path, seed: u64) -> Result<ScenarioConfig, ScenarioError> {
    let mut config = ScenarioConfig {
        level,
        env,
        episodes: if level == ScenarioLevel::Lv3 { DEFAULT_EPISODES } else { 1 },
        dataset: None,
        expert_prompt: None,
        seed,
        step_cap: DEFAULT_STEP_CAP,
    };
    if let Some(policy) = level.dataset_policy() {
        let path = dataset_path(assets_dir, env, policy);
        if !path.is_file() {
            return Err(ScenarioError::MissingAsset(path));
        }
        load_dataset(&path, env)?;
        config.dataset = Some(path);
    }
    if level == ScenarioLevel::Lv5 {
        let path = expert_prompt_path(assets_dir, env);
        if !path.is_file() {
            return Err(ScenarioError::MissingAsset(path));
        }
        config.expert_prompt = Some(path);
    }
    Ok(config)
}

/// Read a dataset file and check it belongs to `env`.
pub fn load_dataset(path: &Path, env: EnvId) -> Result<Vec<Trajectory>, ScenarioError> {
    let (header, trajectories) = read_file(path)?;
    if header.env != env {
        return Err(ScenarioError::DatasetEnvMismatch {
            path: path.to_path_buf(),
            expected: env,
            found: header.env,
        });
    }
    if trajectories.len() != DATASET_SIZE {
        return Err(ScenarioError::DatasetSize {
            path: path.to_path_buf(),
            expected: DATASET_SIZE,
            found: trajectories.len(),
        });
    }
    Ok(trajectories)
}

/// Environment seed for evaluation rollout `index` of a run seeded with `seed`.
pub fn eval_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, stream::EVAL_ROLLOUT, index)
}

/// Trajectories and episode scores collected by a scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioOutput {
    pub episodes: Vec<Episode>,
}

impl ScenarioOutput {
    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.score).collect()
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.episodes.iter().flat_map(|e| e.trajectories.iter())
    }
}

/// Play one trajectory with the agent acting through `gw`.
fn play_trajectory(agent: &mut Agent, gw: &mut LlmGateway, env_id: EnvId, seed: u64, cap: u32) -> Result<Trajectory, ScenarioError> {
    let (mut env, mut obs) = reset(env_id, seed, cap)?;
    let mut traj = Trajectory::new(env_id, seed);
    loop {
        let decision = agent.act(gw, &obs)?;
        let step = env.step(decision.action)?;
        let transition = Transition {
            obs,
            action: decision.action,
            reward: step.reward,
            next_obs: step.observation,
            terminated: step.terminated,
            truncated: step.truncated,
        };
        agent.observe(&transition);
        traj.transitions.push(transition);
        obs = step.observation;
        if step.done() {
            return Ok(traj);
        }
    }
}

/// One scored episode: a single trajectory, or a group of 20 blackjack hands
/// scored by agreement with the optimal policy.
pub fn run_episode(agent: &mut Agent, gw: &mut LlmGateway, env: EnvId, seed: u64, index: usize, cap: u32) -> Result<Episode, ScenarioError> {
    agent.begin_episode();
    if env != EnvId::Blackjack {
        let traj = play_trajectory(agent, gw, env, eval_seed(seed, index as u64), cap)?;
        return Ok(Episode::single(traj));
    }
    let mut hands = Vec::with_capacity(BLACKJACK_GROUP);
    for h in 0..BLACKJACK_GROUP {
        if h > 0 {
            agent.begin_sub_episode();
        }
        let hand_seed = eval_seed(seed, (index * BLACKJACK_GROUP + h) as u64);
        hands.push(play_trajectory(agent, gw, env, hand_seed, cap)?);
    }
    let score = blackjack_agreement_score(&hands, tabular_policy(EnvId::Blackjack)?)?;
    Ok(Episode {
        trajectories: hands,
        score: f64::from(score),
    })
}

fn check_env(agent: &Agent, env: EnvId) -> Result<(), ScenarioError> {
    if agent.env() != env {
        return Err(ScenarioError::AgentEnvMismatch {
            agent: agent.env(),
            scenario: env,
        });
    }
    Ok(())
}

/// Lv1 (no knowledge) and Lv5 (expert knowledge): one update, one episode.
pub fn run_static(
    agent: &mut Agent,
    gw: &mut LlmGateway,
    env: EnvId,
    knowledge: Option<&str>,
    seed: u64,
    cap: u32,
) -> Result<Episode, ScenarioError> {
    check_env(agent, env)?;
    agent.set_episode_budget(1);
    if let Some(text) = knowledge {
        agent.add_expert_knowledge(text);
    }
    agent.update(gw)?;
    run_episode(agent, gw, env, seed, 0, cap)
}

/// Lv2/Lv4: fold each dataset trajectory into knowledge and update, then
/// play one evaluation episode on a fresh seed.
pub fn run_offline(
    agent: &mut Agent,
    gw: &mut LlmGateway,
    env: EnvId,
    trajectories: &[Trajectory],
    seed: u64,
    cap: u32,
) -> Result<Episode, ScenarioError> {
    check_env(agent, env)?;
    agent.set_episode_budget(1);
    for traj in trajectories {
        if traj.env != env {
            return Err(ScenarioError::DatasetEnvMismatch {
                path: PathBuf::new(),
                expected: env,
                found: traj.env,
            });
        }
        agent.absorb(gw, &Episode::single(traj.clone()))?;
        agent.update(gw)?;
    }
    run_episode(agent, gw, env, seed, 0, cap)
}

/// Lv3: per episode, learn guidance, play, then critique into knowledge.
/// Episodes played before an error are kept in `output`.
pub fn run_self_guided(
    agent: &mut Agent,
    gw: &mut LlmGateway,
    env: EnvId,
    episodes: usize,
    seed: u64,
    cap: u32,
    output: &mut ScenarioOutput,
) -> Result<(), ScenarioError> {
    check_env(agent, env)?;
    if episodes == 0 {
        return Err(ScenarioError::NoEpisodes);
    }
    agent.set_episode_budget(episodes);
    for i in 0..episodes {
        agent.update(gw)?;
        let episode = run_episode(agent, gw, env, seed, i, cap)?;
        output.episodes.push(episode.clone());
        agent.absorb(gw, &episode)?;
    }
    Ok(())
}

/// Run `config` and summarize it as a record. Errors do not propagate: they
/// mark the record failed (or skipped, when the token budget ran out).
pub fn run_scenario(agent: &mut Agent, gw: &mut LlmGateway, config: &ScenarioConfig) -> (ScenarioOutput, RunRecord) {
    let started = Instant::now();
    let mut output = ScenarioOutput::default();
    let result = execute(agent, gw, config, &mut output);
    let ledger = gw.ledger();
    let (status, error) = match &result {
        Ok(()) => (RunStatus::Completed, None),
        Err(e) if e.is_budget_exceeded() => (RunStatus::Skipped, Some(e.to_string())),
        Err(e) => (RunStatus::Failed, Some(e.to_string())),
    };
    let record = RunRecord {
        agent: agent.kind().to_string(),
        env: config.env,
        level: config.level.to_string(),
        seed: config.seed,
        returns: output.returns(),
        prompt_tokens: ledger.prompt_tokens(),
        completion_tokens: ledger.completion_tokens(),
        cost: ledger.total_cost(),
        wall_ms: started.elapsed().as_millis() as u64,
        status,
        error,
    };
    (output, record)
}

fn execute(agent: &mut Agent, gw: &mut LlmGateway, config: &ScenarioConfig, output: &mut ScenarioOutput) -> Result<(), ScenarioError> {
    let read = |path: &Path| {
        std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })
    };
    let episode = match config.level {
        ScenarioLevel::Lv1 => run_static(agent, gw, config.env, None, config.seed, config.step_cap)?,
        ScenarioLevel::Lv5 => {
            let path = config.expert_prompt.as_deref().ok_or(ScenarioError::KnowledgeRequired)?;
            let text = read(path)?;
            run_static(agent, gw, config.env, Some(&text), config.seed, config.step_cap)?
        }
        ScenarioLevel::Lv2 | ScenarioLevel::Lv4 => {
            let path = config
                .dataset
                .as_deref()
                .ok_or(ScenarioError::DatasetRequired(config.level))?;
            let data = load_dataset(path, config.env)?;
            run_offline(agent, gw, config.env, &data, config.seed, config.step_cap)?
        }
        ScenarioLevel::Lv3 => {
            return run_self_guided(agent, gw, config.env, config.episodes, config.seed, config.step_cap, output);
        }
    };
    output.episodes.push(episode);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_parsing() {
        for l in ScenarioLevel::ALL {
            assert_eq!(l.as_str().parse::<ScenarioLevel>().unwrap(), l);
        }
        assert!("lv6".parse::<ScenarioLevel>().is_err());
    }

    #[test]
    fn lv3_defaults() {
        let c = make_scenario(ScenarioLevel::Lv3, EnvId::Cartpole, Path::new("/nonexistent"), 3).unwrap();
        assert_eq!(c.episodes, 5);
        assert!(c.dataset.is_none() && c.expert_prompt.is_none());
        assert!(matches!(
            make_scenario(ScenarioLevel::Lv5, EnvId::Cartpole, Path::new("/nonexistent"), 3),
            Err(ScenarioError::MissingAsset(_))
        ));
    }
}
