//! The actor-critic-learner framework and the seven language agents.

mod learning;
mod prompts;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{action_space, Action, ActionSpace, EnvId, Observation, Trajectory, Transition};
use crate::grounding::{text_bundle, GroundingError};
use crate::llm::{parse_continuous_action, parse_discrete_action, ChatMessage, LlmError, LlmGateway};
use crate::policies::random_action;
use crate::seeding::{derive_seed, rng_from_seed, stream};

pub use learning::{criticize, digest, learn, reflect, render_knowledge};
pub use prompts::{build_actor_prompt, build_path_prompts, render, PromptContext, SPP_PERSONAS};

/// Default short-memory window, in transitions.
pub const SHORT_MEMORY_WINDOW: usize = 8;
/// Samples per decision for self-consistency.
pub const SELF_CONSISTENCY_PATHS: usize = 5;
/// Sampling temperature for multi-path agents.
pub const MULTI_PATH_TEMPERATURE: f64 = 1.0;
/// Cap on stored trajectory digests, in characters.
pub const DIGEST_CAP: usize = 2000;
/// Extra queries after an unparseable reply before falling back to a random action.
pub const PARSE_RETRIES: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error("episode has no transitions")]
    EmptyEpisode,
    #[error("unknown agent '{0}'")]
    UnknownAgent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Naive,
    Cot,
    SelfAsk,
    SelfConsistency,
    Spp,
    Reflexion,
    Exe,
}

impl AgentKind {
    pub const ALL: [AgentKind; 7] = [
        AgentKind::Naive,
        AgentKind::Cot,
        AgentKind::SelfAsk,
        AgentKind::SelfConsistency,
        AgentKind::Spp,
        AgentKind::Reflexion,
        AgentKind::Exe,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::Naive => "naive",
            AgentKind::Cot => "cot",
            AgentKind::SelfAsk => "self_ask",
            AgentKind::SelfConsistency => "self_consistency",
            AgentKind::Spp => "spp",
            AgentKind::Reflexion => "reflexion",
            AgentKind::Exe => "exe",
        }
    }

    pub fn is_multi_path(&self) -> bool {
        matches!(self, AgentKind::SelfConsistency | AgentKind::Spp)
    }

    /// Only these agents see the current episode's recent transitions.
    pub fn uses_short_memory(&self) -> bool {
        matches!(self, AgentKind::Reflexion | AgentKind::Exe)
    }

    /// Backend calls per decision, before parse retries.
    pub fn paths(&self) -> usize {
        match self {
            AgentKind::SelfConsistency => SELF_CONSISTENCY_PATHS,
            AgentKind::Spp => SPP_PERSONAS.len(),
            _ => 1,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        AgentKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| AgentError::UnknownAgent(s.to_string()))
    }
}

/// The most recent transitions of the current episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortMemory {
    window: usize,
    items: VecDeque<Transition>,
}

impl Default for ShortMemory {
    fn default() -> Self {
        ShortMemory::new(SHORT_MEMORY_WINDOW)
    }
}

impl ShortMemory {
    pub fn new(window: usize) -> Self {
        ShortMemory {
            window,
            items: VecDeque::with_capacity(window),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        self.items.as_slices().0
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

/// Append `transition`, evicting the oldest entries beyond the window.
pub fn update_short_memory(memory: &mut ShortMemory, transition: Transition) {
    if memory.window == 0 {
        return;
    }
    while memory.items.len() >= memory.window {
        memory.items.pop_front();
    }
    memory.items.push_back(transition);
    memory.items.make_contiguous();
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KnowledgeEntry {
    /// The game document an agent starts from.
    Document { text: String },
    /// Expert-authored material.
    Expert { text: String },
    /// A played or injected episode with its review.
    Experience { digest: String, critique: Option<String>, score: f64 },
    /// A reflection or summary written by the learner.
    Reflection { text: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeMemory {
    pub entries: Vec<KnowledgeEntry>,
}

impl KnowledgeMemory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: KnowledgeEntry) {
        self.entries.push(entry);
    }

    pub fn has_experience(&self) -> bool {
        self.entries.iter().any(|e| matches!(e, KnowledgeEntry::Experience { .. }))
    }

    pub fn reflections(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter_map(|e| match e {
            KnowledgeEntry::Reflection { text } => Some(text.as_str()),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guidance {
    pub suggestion: String,
    pub insight: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critique {
    pub verbal: Option<String>,
    pub numeric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDecision {
    pub action: Action,
    pub raw_response: String,
    /// Per-path (action, reply) for multi-path agents.
    pub candidates: Option<Vec<(Action, String)>>,
    /// Set when parsing failed on every try and a random action was used.
    pub fallback: bool,
}

/// One scored unit of play: a single trajectory, or for blackjack a group of
/// hands scored together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub trajectories: Vec<Trajectory>,
    pub score: f64,
}

impl Episode {
    pub fn single(trajectory: Trajectory) -> Self {
        let score = trajectory.undiscounted_return();
        Episode {
            trajectories: vec![trajectory],
            score,
        }
    }
}

/// Mode of 1-based candidates; ties go to the smallest action.
pub fn vote(candidates: &[usize]) -> Option<usize> {
    let mut counts = std::collections::BTreeMap::new();
    for &c in candidates {
        *counts.entry(c).or_insert(0usize) += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|&(_, n)| n == best).map(|(a, _)| a)
}

/// Median of continuous candidates (lower middle for even counts).
pub fn vote_continuous(candidates: &[f64]) -> Option<f64> {
    let mut sorted: Vec<f64> = candidates.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(f64::total_cmp);
    Some(sorted[(sorted.len() - 1) / 2])
}

/// A language agent bound to one environment.
#[derive(Debug, Clone)]
pub struct Agent {
    kind: AgentKind,
    env: EnvId,
    knowledge: KnowledgeMemory,
    guidance: Option<Guidance>,
    short_memory: ShortMemory,
    level_assets: Option<String>,
    total_episodes: usize,
    episodes_started: usize,
    updates: usize,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(kind: AgentKind, env: EnvId, seed: u64) -> Self {
        let mut knowledge = KnowledgeMemory::default();
        if kind == AgentKind::Exe {
            knowledge.push(KnowledgeEntry::Document {
                text: format!(
                    "{}\n{}",
                    crate::grounding::describe_game(env),
                    crate::grounding::describe_goal(env)
                ),
            });
        }
        Agent {
            kind,
            env,
            knowledge,
            guidance: None,
            short_memory: ShortMemory::default(),
            level_assets: None,
            total_episodes: 1,
            episodes_started: 0,
            updates: 0,
            rng: rng_from_seed(derive_seed(seed, stream::AGENT, 0)),
        }
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn env(&self) -> EnvId {
        self.env
    }

    pub fn knowledge(&self) -> &KnowledgeMemory {
        &self.knowledge
    }

    pub fn guidance(&self) -> Option<&Guidance> {
        self.guidance.as_ref()
    }

    pub fn short_memory(&self) -> &ShortMemory {
        &self.short_memory
    }

    /// Number of `update` calls so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn set_episode_budget(&mut self, total: usize) {
        self.total_episodes = total.max(1);
    }

    /// Load expert material: stored in knowledge and shown verbatim to the actor.
    pub fn add_expert_knowledge(&mut self, text: &str) {
        self.knowledge.push(KnowledgeEntry::Expert { text: text.to_string() });
        self.level_assets = Some(text.to_string());
    }

    /// Refresh guidance from knowledge (the learner step).
    pub fn update(&mut self, gw: &mut LlmGateway) -> Result<(), AgentError> {
        let remaining_index = self.episodes_started.min(self.total_episodes.saturating_sub(1));
        self.guidance = learn(self.kind, self.env, &self.knowledge, remaining_index, self.total_episodes, gw)?;
        self.updates += 1;
        Ok(())
    }

    /// Start a new episode: clears short memory.
    pub fn begin_episode(&mut self) {
        self.short_memory.clear();
        self.episodes_started += 1;
    }

    /// Start a new hand within the same scored episode.
    pub fn begin_sub_episode(&mut self) {
        self.short_memory.clear();
    }

    pub fn observe(&mut self, transition: &Transition) {
        update_short_memory(&mut self.short_memory, transition.clone());
    }

    /// The prompts the actor would send for `obs` right now.
    pub fn actor_prompts(&self, obs: &Observation) -> Result<Vec<Vec<ChatMessage>>, AgentError> {
        let bundle = text_bundle(self.env, obs)?;
        let ctx = PromptContext {
            env: self.env,
            bundle: &bundle,
            short_memory: &self.short_memory,
            guidance: self.guidance.as_ref(),
            level_assets: self.level_assets.as_deref(),
        };
        Ok(build_path_prompts(self.kind, &ctx))
    }

    pub fn act(&mut self, gw: &mut LlmGateway, obs: &Observation) -> Result<ActionDecision, AgentError> {
        let prompts = self.actor_prompts(obs)?;
        let temperature = if self.kind.is_multi_path() { MULTI_PATH_TEMPERATURE } else { 0.0 };
        let space = action_space(self.env);
        let mut candidates = Vec::with_capacity(prompts.len());
        let mut fallback = false;
        for messages in prompts {
            let (action, raw, fb) = self.query_action(gw, messages, temperature, space)?;
            fallback |= fb;
            candidates.push((action, raw));
        }
        let action = match space {
            ActionSpace::Discrete(_) => {
                let ones: Vec<usize> = candidates.iter().filter_map(|(a, _)| a.discrete()).map(|a| a + 1).collect();
                Action::Discrete(vote(&ones).expect("at least one path") - 1)
            }
            ActionSpace::Continuous { .. } => {
                let vals: Vec<f64> = candidates.iter().filter_map(|(a, _)| a.continuous()).collect();
                Action::Continuous(vote_continuous(&vals).expect("at least one path"))
            }
        };
        let raw_response = candidates
            .iter()
            .find(|(a, _)| *a == action)
            .map(|(_, r)| r.clone())
            .unwrap_or_else(|| candidates[0].1.clone());
        Ok(ActionDecision {
            action,
            raw_response,
            candidates: self.kind.is_multi_path().then_some(candidates),
            fallback,
        })
    }

    fn query_action(
        &mut self,
        gw: &mut LlmGateway,
        mut messages: Vec<ChatMessage>,
        temperature: f64,
        space: ActionSpace,
    ) -> Result<(Action, String, bool), AgentError> {
        let retry_text = match space {
            ActionSpace::Discrete(_) => {
                let valid = format!("{:?}", space.one_based());
                render(prompts::PARSE_RETRY, &[("valid", &valid)])
            }
            ActionSpace::Continuous { low, high } => render(
                prompts::PARSE_RETRY_CONTINUOUS,
                &[("low", &low.to_string()), ("high", &high.to_string())],
            ),
        };
        let mut last = String::new();
        for attempt in 0..=PARSE_RETRIES {
            let purpose = if attempt == 0 { "actor" } else { "actor_retry" };
            let reply = gw.chat(purpose, messages.clone(), temperature)?;
            let parsed = match space {
                ActionSpace::Discrete(_) => parse_discrete_action(&reply, &space.one_based()),
                ActionSpace::Continuous { low, high } => parse_continuous_action(&reply, low, high),
            };
            match parsed {
                Ok(action) => return Ok((action, reply, false)),
                Err(e) => {
                    messages.push(ChatMessage::assistant(reply.clone()));
                    messages.push(ChatMessage::user(retry_text.clone()));
                    last = reply;
                    if attempt == PARSE_RETRIES {
                        gw.note(format!("no parseable action after {} tries ({e}); acting randomly", attempt + 1));
                    }
                }
            }
        }
        Ok((random_action(self.env, &mut self.rng), last, true))
    }

    /// Critique an episode and fold it into knowledge.
    pub fn absorb(&mut self, gw: &mut LlmGateway, episode: &Episode) -> Result<Critique, AgentError> {
        if episode.trajectories.iter().all(|t| t.is_empty()) {
            return Err(AgentError::EmptyEpisode);
        }
        let critique = criticize(self.kind, self.env, episode, self.guidance.as_ref(), gw)?;
        match self.kind {
            AgentKind::Exe => self.knowledge.push(KnowledgeEntry::Experience {
                digest: digest(self.env, episode)?,
                critique: critique.verbal.clone(),
                score: episode.score,
            }),
            _ => {
                let text = reflect(self.kind, self.env, &self.knowledge, episode, &critique, gw)?;
                self.knowledge.push(KnowledgeEntry::Reflection { text });
            }
        }
        Ok(critique)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Observation;

    fn t(c: u8) -> Transition {
        Transition {
            obs: Observation::CliffWalking { row: 2, col: c },
            action: Action::Discrete(1),
            reward: -1.0,
            next_obs: Observation::CliffWalking { row: 2, col: c + 1 },
            terminated: false,
            truncated: false,
        }
    }

    #[test]
    fn short_memory_window() {
        let mut m = ShortMemory::new(2);
        update_short_memory(&mut m, t(0));
        assert_eq!(m.transitions(), &[t(0)]);
        update_short_memory(&mut m, t(1));
        update_short_memory(&mut m, t(2));
        assert_eq!(m.transitions(), &[t(1), t(2)]);
        m.clear();
        assert!(m.is_empty());
    }

    #[test]
    fn vote_rules() {
        assert_eq!(vote(&[3, 2, 1, 1, 1]), Some(1));
        assert_eq!(vote(&[2, 1]), Some(1));
        assert_eq!(vote(&[4]), Some(4));
        assert_eq!(vote(&[]), None);
        assert_eq!(vote_continuous(&[0.3, -1.0, 0.9]), Some(0.3));
    }

    #[test]
    fn kind_parsing() {
        for k in AgentKind::ALL {
            assert_eq!(k.as_str().parse::<AgentKind>().unwrap(), k);
        }
        assert_eq!("self-consistency".parse::<AgentKind>().unwrap(), AgentKind::SelfConsistency);
    }
}
