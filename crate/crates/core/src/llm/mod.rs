//! Chat-completion access for language agents: a live OpenAI-compatible
//! backend, a deterministic mock, action parsing, and usage accounting.

mod gateway;
mod ledger;
mod mock;
mod openai;
mod parse;
mod rate_limit;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gateway::{CallTag, LlmGateway, TokenBudget, TranscriptEntry};
pub use ledger::{estimate_cost, CostReport, ModelRate, Pricing, UsageLedger, UsageRecord};
pub use mock::{MockBackend, MockRule, MockScript};
pub use openai::{OpenAiBackend, RetryPolicy};
pub use parse::{parse_continuous_action, parse_discrete_action, ParseError};
pub use rate_limit::RateLimiter;

/// Model used when `LLM_MODEL` is unset.
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo-0301";
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Temperature 0 and the default token limit.
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            model: model.into(),
            messages,
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    /// Content of the final user message, or "" if there is none.
    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    /// HTTP attempts spent, including the successful one.
    pub attempts: u32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("authentication rejected: {0}")]
    AuthError(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimitedExhausted { attempts: u32 },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("mock script exhausted after {0} replies")]
    ScriptExhausted(usize),
    #[error("no pricing for model '{0}'")]
    UnknownModel(String),
    #[error("token budget of {0} exceeded")]
    BudgetExceeded(u64),
    #[error("missing configuration: {0}")]
    Config(String),
    #[error("empty request")]
    EmptyRequest,
}

impl LlmError {
    /// Attempts consumed by the failed call.
    pub fn attempts(&self) -> u32 {
        match self {
            LlmError::RateLimitedExhausted { attempts } | LlmError::Transport { attempts, .. } => {
                *attempts
            }
            LlmError::BudgetExceeded(_) | LlmError::Config(_) | LlmError::EmptyRequest => 0,
            _ => 1,
        }
    }
}

/// Anything that can answer a chat request. Handles are shared across threads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;

    /// Short identifier used in transcripts.
    fn name(&self) -> &str;
}
