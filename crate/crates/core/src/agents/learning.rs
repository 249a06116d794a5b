//! Critic and learner steps.

use super::prompts::{
    render, CRITIC_EXE, DEFAULT_FEW_SHOT, DEFAULT_LEARNER, EXE_INSIGHT, EXE_SUGGESTION,
    EXE_SUGGESTION_WITH_INSIGHT, REFLEXION_LEARNER,
};
use super::{AgentError, AgentKind, Critique, Episode, Guidance, KnowledgeEntry, KnowledgeMemory, DIGEST_CAP};
use crate::env::EnvId;
use crate::grounding::{describe_game, describe_goal, py_float, translate_transitions};
use crate::llm::{ChatMessage, LlmGateway};

/// Keep the head and tail of `text` within `cap` characters.
fn cap_text(text: &str, cap: usize) -> String {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() <= cap {
        return text.to_string();
    }
    const MARK: &str = "\n[...]\n";
    let keep = cap.saturating_sub(MARK.len());
    let head = keep / 2;
    let tail = keep - head;
    let mut out: String = chars[..head].iter().collect();
    out.push_str(MARK);
    out.extend(&chars[chars.len() - tail..]);
    out
}

/// Text rendering of an episode, capped at [`DIGEST_CAP`] characters.
pub fn digest(env: EnvId, episode: &Episode) -> Result<String, AgentError> {
    let mut parts = Vec::new();
    let multi = episode.trajectories.len() > 1;
    for (i, traj) in episode.trajectories.iter().enumerate() {
        if traj.is_empty() {
            continue;
        }
        let text = translate_transitions(env, &traj.transitions, false)?;
        if multi {
            parts.push(format!("Round {}:", i + 1));
        }
        parts.push(text.joined());
    }
    parts.push(format!("Total score: {}", py_float(episode.score)));
    Ok(cap_text(&parts.join("\n"), DIGEST_CAP))
}

/// Knowledge rendered for learner prompts. The game document is skipped
/// because learner prompts carry the descriptions already.
pub fn render_knowledge(knowledge: &KnowledgeMemory) -> String {
    let mut lines = Vec::new();
    let mut episode = 0;
    for entry in &knowledge.entries {
        match entry {
            KnowledgeEntry::Document { .. } => {}
            KnowledgeEntry::Expert { text } => lines.push(format!("Expert guidance:\n{text}")),
            KnowledgeEntry::Experience { digest, critique, .. } => {
                episode += 1;
                lines.push(format!("Episode {episode}:\n{digest}"));
                if let Some(c) = critique {
                    lines.push(format!("Review of episode {episode}: {c}"));
                }
            }
            KnowledgeEntry::Reflection { text } => lines.push(format!("Note: {text}")),
        }
    }
    if episode == 0 {
        lines.push("No episode has been played yet.".to_string());
    }
    lines.join("\n")
}

fn reflections_memory(knowledge: &KnowledgeMemory) -> Option<String> {
    let lines: Vec<String> = knowledge
        .reflections()
        .enumerate()
        .map(|(i, r)| format!("Trial {i}:\n{r}"))
        .collect();
    (!lines.is_empty()).then(|| lines.join("\n"))
}

/// Evaluate an episode. EXE asks the backend for a verbal review against the
/// suggestion that guided play; every other agent scores it by its return.
pub fn criticize(
    kind: AgentKind,
    env: EnvId,
    episode: &Episode,
    guidance: Option<&Guidance>,
    gw: &mut LlmGateway,
) -> Result<Critique, AgentError> {
    if kind != AgentKind::Exe {
        return Ok(Critique {
            verbal: None,
            numeric: Some(episode.score),
        });
    }
    let traj = digest(env, episode)?;
    let suggestion = guidance.map(|g| g.suggestion.as_str()).unwrap_or("none");
    let score = py_float(episode.score);
    let prompt = render(
        CRITIC_EXE,
        &[
            ("game_description", describe_game(env)),
            ("goal_description", describe_goal(env)),
            ("suggestion", suggestion),
            ("traj", &traj),
            ("score", &score),
        ],
    );
    let verbal = gw.chat("critic", vec![ChatMessage::user(prompt)], 0.0)?;
    Ok(Critique {
        verbal: Some(verbal),
        numeric: None,
    })
}

/// Produce guidance for the next episode from knowledge.
///
/// EXE always calls the backend: one call without experience, an insight
/// call followed by a suggestion call with experience. Other agents turn
/// their stored reflections into guidance without a call, and have none
/// until the first reflection exists.
pub fn learn(
    kind: AgentKind,
    env: EnvId,
    knowledge: &KnowledgeMemory,
    episode_index: usize,
    total_episodes: usize,
    gw: &mut LlmGateway,
) -> Result<Option<Guidance>, AgentError> {
    if kind != AgentKind::Exe {
        let expert_only = knowledge.entries.iter().all(|e| !matches!(e, KnowledgeEntry::Reflection { .. }));
        if expert_only {
            return Ok(None);
        }
        return Ok(reflections_memory(knowledge).map(|suggestion| Guidance {
            suggestion,
            insight: None,
        }));
    }
    let remaining = total_episodes.saturating_sub(episode_index).max(1).to_string();
    let total = total_episodes.to_string();
    let rendered = render_knowledge(knowledge);
    let base = [
        ("game_description", describe_game(env)),
        ("goal_description", describe_goal(env)),
        ("knowledge", rendered.as_str()),
        ("remaining", remaining.as_str()),
        ("total", total.as_str()),
    ];
    if !knowledge.has_experience() {
        let prompt = render(EXE_SUGGESTION, &base);
        let suggestion = gw.chat("learner_suggestion", vec![ChatMessage::user(prompt)], 0.0)?;
        return Ok(Some(Guidance {
            suggestion,
            insight: None,
        }));
    }
    let insight = gw.chat("learner_insight", vec![ChatMessage::user(render(EXE_INSIGHT, &base))], 0.0)?;
    let mut vars = base.to_vec();
    vars.push(("insight", insight.as_str()));
    let prompt = render(EXE_SUGGESTION_WITH_INSIGHT, &vars);
    let suggestion = gw.chat("learner_suggestion", vec![ChatMessage::user(prompt)], 0.0)?;
    Ok(Some(Guidance {
        suggestion,
        insight: Some(insight),
    }))
}

/// Reflection (Reflexion) or summary (default learner) of one episode.
pub fn reflect(
    kind: AgentKind,
    env: EnvId,
    knowledge: &KnowledgeMemory,
    episode: &Episode,
    critique: &Critique,
    gw: &mut LlmGateway,
) -> Result<String, AgentError> {
    let traj = digest(env, episode)?;
    let score = py_float(critique.numeric.unwrap_or(episode.score));
    let memory = reflections_memory(knowledge).unwrap_or_else(|| "None yet.".to_string());
    let vars = [
        ("game_description", describe_game(env)),
        ("goal_description", describe_goal(env)),
        ("traj", traj.as_str()),
        ("score", score.as_str()),
        ("memory", memory.as_str()),
        ("few_shot_examples", DEFAULT_FEW_SHOT),
    ];
    let (purpose, template) = if kind == AgentKind::Reflexion {
        ("learner_reflection", REFLEXION_LEARNER)
    } else {
        ("learner_summary", DEFAULT_LEARNER)
    };
    Ok(gw.chat(purpose, vec![ChatMessage::user(render(template, &vars))], 0.0)?)
}
