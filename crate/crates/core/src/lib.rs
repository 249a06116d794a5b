//! Text-grounded decision-making environments, language-agent harness and a
//! PPO reference baseline.

pub mod agents;
pub mod dataset;
pub mod env;
pub mod evaluation;
pub mod grounding;
pub mod harness;
pub mod llm;
pub mod policies;
pub mod ppo;
pub mod scenario;
pub mod seeding;

mod fsutil;
