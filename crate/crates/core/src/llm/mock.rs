use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};

/// A substring rule: the first rule whose pattern occurs in the last user
/// message supplies the reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    pub contains: String,
    pub reply: String,
}

type Responder = Arc<dyn Fn(&ChatRequest) -> String + Send + Sync>;

/// How the mock picks replies.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MockScript {
    /// Replies in order; running past the end is an error.
    Sequence { replies: Vec<String> },
    /// Replies in order, wrapping around.
    Cycle { replies: Vec<String> },
    /// Substring rules with a fallback reply.
    Rules { rules: Vec<MockRule>, default: String },
    #[serde(skip)]
    Responder(Responder),
}

impl std::fmt::Debug for MockScript {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MockScript::Sequence { replies } => f.debug_struct("Sequence").field("replies", replies).finish(),
            MockScript::Cycle { replies } => f.debug_struct("Cycle").field("replies", replies).finish(),
            MockScript::Rules { rules, default } => f
                .debug_struct("Rules")
                .field("rules", rules)
                .field("default", default)
                .finish(),
            MockScript::Responder(_) => f.write_str("Responder(..)"),
        }
    }
}

/// Deterministic scripted backend. Replies are consumed in one global order
/// under a lock; token counts are a fixed function of the text.
#[derive(Debug)]
pub struct MockBackend {
    script: MockScript,
    cursor: Mutex<usize>,
}

/// Roughly four characters per token, rounded up.
pub(crate) fn synthetic_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        MockBackend {
            script,
            cursor: Mutex::new(0),
        }
    }

    pub fn sequence<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(MockScript::Sequence {
            replies: replies.into_iter().map(Into::into).collect(),
        })
    }

    pub fn cycle<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self::new(MockScript::Cycle {
            replies: replies.into_iter().map(Into::into).collect(),
        })
    }

    pub fn responder(f: impl Fn(&ChatRequest) -> String + Send + Sync + 'static) -> Self {
        Self::new(MockScript::Responder(Arc::new(f)))
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    /// Number of replies served so far.
    pub fn served(&self) -> usize {
        *self.cursor.lock().expect("mock poisoned")
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        if request.messages.is_empty() {
            return Err(LlmError::EmptyRequest);
        }
        let mut cursor = self.cursor.lock().expect("mock poisoned");
        let content = match &self.script {
            MockScript::Sequence { replies } => replies
                .get(*cursor)
                .cloned()
                .ok_or(LlmError::ScriptExhausted(replies.len()))?,
            MockScript::Cycle { replies } => {
                if replies.is_empty() {
                    return Err(LlmError::ScriptExhausted(0));
                }
                replies[*cursor % replies.len()].clone()
            }
            MockScript::Rules { rules, default } => {
                let user = request.last_user();
                rules
                    .iter()
                    .find(|r| user.contains(&r.contains))
                    .map(|r| r.reply.clone())
                    .unwrap_or_else(|| default.clone())
            }
            MockScript::Responder(f) => f(request),
        };
        *cursor += 1;
        let prompt: u64 = request.messages.iter().map(|m| synthetic_tokens(&m.content)).sum();
        Ok(ChatResponse {
            prompt_tokens: prompt,
            completion_tokens: synthetic_tokens(&content),
            content,
            latency_ms: 0,
            attempts: 1,
        })
    }

    fn name(&self) -> &str {
        "mock"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatMessage;

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new("mock", vec![ChatMessage::user(text)])
    }

    #[test]
    fn sequence_echoes_then_exhausts() {
        let mock = MockBackend::sequence(["{\"action\": 1}"]);
        let r = mock.complete(&req("hi")).unwrap();
        assert_eq!(r.content, "{\"action\": 1}");
        assert_eq!(r.completion_tokens, 4);
        assert_eq!(r.prompt_tokens, 1);
        assert_eq!(mock.complete(&req("hi")), Err(LlmError::ScriptExhausted(1)));
    }

    #[test]
    fn cycle_wraps() {
        let mock = MockBackend::cycle(["a", "b"]);
        let got: Vec<_> = (0..5).map(|_| mock.complete(&req("x")).unwrap().content).collect();
        assert_eq!(got, ["a", "b", "a", "b", "a"]);
    }

    #[test]
    fn rules_match_last_user_message() {
        let mock = MockBackend::new(MockScript::Rules {
            rules: vec![
                MockRule { contains: "[3, 0]".into(), reply: "1".into() },
                MockRule { contains: "[2,".into(), reply: "2".into() },
            ],
            default: "none".into(),
        });
        assert_eq!(mock.complete(&req("at [3, 0]")).unwrap().content, "1");
        assert_eq!(mock.complete(&req("at [2, 5]")).unwrap().content, "2");
        assert_eq!(mock.complete(&req("elsewhere")).unwrap().content, "none");
        assert_eq!(mock.served(), 3);
    }

    #[test]
    fn script_serde_round_trip() {
        let text = r#"{"mode":"rules","rules":[{"contains":"a","reply":"b"}],"default":"c"}"#;
        let s: MockScript = serde_json::from_str(text).unwrap();
        assert!(matches!(s, MockScript::Rules { .. }));
        let seq: MockScript = serde_json::from_str(r#"{"mode":"sequence","replies":["x"]}"#).unwrap();
        assert!(matches!(seq, MockScript::Sequence { .. }));
    }
}
