#![allow(dead_code)]

use std::sync::Arc;

use gymtext_core::env::{EnvId, Observation};
use gymtext_core::llm::{CallTag, ChatBackend, ChatRequest, LlmGateway, MockBackend};
use gymtext_core::policies::expert_action;
use regex::Regex;

pub fn gateway(backend: impl ChatBackend + 'static, env: EnvId) -> LlmGateway {
    let tag = CallTag {
        agent: "test".into(),
        env,
        level: "lv1".into(),
        seed: 0,
    };
    LlmGateway::new(Arc::new(backend), "mock", tag)
}

/// The observation named by the last "Current Game State:" line, if any.
pub fn current_state(env: EnvId, prompt: &str) -> Option<Observation> {
    let tail = &prompt[prompt.rfind("Current Game State: ")?..];
    match env {
        EnvId::Cliffwalking => {
            let re = Regex::new(r"location \[(\d+), (\d+)\]").unwrap();
            let c = re.captures(tail)?;
            Some(Observation::CliffWalking {
                row: c[1].parse().ok()?,
                col: c[2].parse().ok()?,
            })
        }
        EnvId::Blackjack => {
            let re = Regex::new(r"current sum is (\d+), the dealer is showing (\d+), and the player has a usable ace: (yes|no)")
                .unwrap();
            let c = re.captures(tail)?;
            Some(Observation::Blackjack {
                player_sum: c[1].parse().ok()?,
                dealer_showing: c[2].parse().ok()?,
                usable_ace: &c[3] == "yes",
            })
        }
        _ => None,
    }
}

/// Answers actor prompts with the reference policy's action and every
/// other prompt with a fixed note.
pub fn expert_mock(env: EnvId) -> MockBackend {
    MockBackend::responder(move |req: &ChatRequest| {
        let prompt = req.last_user();
        match current_state(env, prompt) {
            Some(obs) if prompt.contains("Your Next Move") => {
                let a = expert_action(env, &obs).unwrap().discrete().unwrap();
                format!("{{\"action\": {}}}", a + 1)
            }
            _ => "Keep to the plan.".to_string(),
        }
    })
}
