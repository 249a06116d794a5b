//! Prompt templates and actor prompt assembly.

use super::{AgentKind, Guidance, ShortMemory};
use crate::env::EnvId;
use crate::grounding::{translate_transitions, TextBundle};
use crate::llm::ChatMessage;

pub(crate) const COT: &str = include_str!("../../assets/prompts/cot.txt");
pub(crate) const SELF_ASK: &str = include_str!("../../assets/prompts/self_ask.txt");
pub(crate) const MEMORY_ACTOR: &str = include_str!("../../assets/prompts/memory_actor.txt");
pub(crate) const PARSE_RETRY: &str = include_str!("../../assets/prompts/parse_retry.txt");
pub(crate) const PARSE_RETRY_CONTINUOUS: &str =
    include_str!("../../assets/prompts/parse_retry_continuous.txt");
pub(crate) const CRITIC_EXE: &str = include_str!("../../assets/prompts/critic_exe.txt");
pub(crate) const EXE_SUGGESTION: &str = include_str!("../../assets/prompts/exe_suggestion.txt");
pub(crate) const EXE_INSIGHT: &str = include_str!("../../assets/prompts/exe_insight.txt");
pub(crate) const EXE_SUGGESTION_WITH_INSIGHT: &str =
    include_str!("../../assets/prompts/exe_suggestion_with_insight.txt");
pub(crate) const REFLEXION_LEARNER: &str = include_str!("../../assets/prompts/reflexion_learner.txt");
pub(crate) const DEFAULT_LEARNER: &str = include_str!("../../assets/prompts/default_learner.txt");
pub(crate) const DEFAULT_FEW_SHOT: &str = include_str!("../../assets/prompts/default_few_shot.txt");

/// Persona scaffolds used by the SPP agent, one per reasoning path.
pub const SPP_PERSONAS: [(&str, &str); 3] = [
    ("leader", include_str!("../../assets/prompts/spp_leader.txt")),
    ("analyst", include_str!("../../assets/prompts/spp_analyst.txt")),
    ("executor", include_str!("../../assets/prompts/spp_executor.txt")),
];

/// Replace each `{key}` in `template` with its value. Unknown placeholders
/// are left as they are.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Everything the actor prompt is assembled from.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub env: EnvId,
    pub bundle: &'a TextBundle,
    pub short_memory: &'a ShortMemory,
    pub guidance: Option<&'a Guidance>,
    /// Expert material inserted verbatim before the current state.
    pub level_assets: Option<&'a str>,
}

fn guidance_block(kind: AgentKind, guidance: &Guidance) -> String {
    match kind {
        AgentKind::Exe => {
            let mut block = String::new();
            if let Some(insight) = &guidance.insight {
                block.push_str(&format!("The insights of the game are listed below: {insight}\n"));
            }
            block.push_str(&format!("The suggestions are listed below:{}", guidance.suggestion));
            block
        }
        AgentKind::Reflexion => format!("Your memory for the task below:\n{}", guidance.suggestion),
        _ => format!("Memory from past attempts:\n{}", guidance.suggestion),
    }
}

fn scaffold(kind: AgentKind, persona: Option<&str>) -> Option<&str> {
    match kind {
        AgentKind::Naive => None,
        AgentKind::Cot | AgentKind::SelfConsistency => Some(COT),
        AgentKind::SelfAsk => Some(SELF_ASK),
        AgentKind::Spp => Some(persona.unwrap_or(SPP_PERSONAS[0].1)),
        AgentKind::Reflexion | AgentKind::Exe => Some(MEMORY_ACTOR),
    }
}

fn assemble(kind: AgentKind, ctx: &PromptContext<'_>, persona: Option<&str>) -> Vec<ChatMessage> {
    let system = format!("{}\n{}", ctx.bundle.game_description, ctx.bundle.goal_description);
    let mut parts: Vec<String> = Vec::new();
    if let Some(guidance) = ctx.guidance {
        parts.push(guidance_block(kind, guidance));
    }
    if kind.uses_short_memory() && !ctx.short_memory.is_empty() {
        if let Ok(text) = translate_transitions(ctx.env, ctx.short_memory.transitions(), false) {
            parts.push(format!(
                "The recent transitions of this episode are listed below:\n{}",
                text.joined()
            ));
        }
    }
    if let Some(assets) = ctx.level_assets {
        parts.push(assets.to_string());
    }
    parts.push(format!("Current Game State: {}", ctx.bundle.observation_text));
    if let Some(s) = scaffold(kind, persona) {
        parts.push(s.to_string());
    }
    parts.push(ctx.bundle.action_description.clone());
    vec![ChatMessage::system(system), ChatMessage::user(parts.join("\n"))]
}

/// The actor prompt for a single reasoning path.
pub fn build_actor_prompt(kind: AgentKind, ctx: &PromptContext<'_>) -> Vec<ChatMessage> {
    assemble(kind, ctx, None)
}

/// One prompt per reasoning path: several for multi-path agents, one otherwise.
pub fn build_path_prompts(kind: AgentKind, ctx: &PromptContext<'_>) -> Vec<Vec<ChatMessage>> {
    match kind {
        AgentKind::SelfConsistency => vec![assemble(kind, ctx, None); super::SELF_CONSISTENCY_PATHS],
        AgentKind::Spp => SPP_PERSONAS
            .iter()
            .map(|(_, persona)| assemble(kind, ctx, Some(persona)))
            .collect(),
        _ => vec![assemble(kind, ctx, None)],
    }
}
