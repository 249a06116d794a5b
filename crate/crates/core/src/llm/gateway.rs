use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatMessage, ChatRequest, LlmError, Pricing, UsageLedger, UsageRecord};
use crate::env::EnvId;

/// Identifies the experiment cell a call belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallTag {
    pub agent: String,
    pub env: EnvId,
    pub level: String,
    pub seed: u64,
}

/// Token allowance shared by every gateway of a run.
#[derive(Debug)]
pub struct TokenBudget {
    limit: u64,
    used: AtomicU64,
}

impl TokenBudget {
    pub fn new(limit: u64) -> Self {
        TokenBudget {
            limit,
            used: AtomicU64::new(0),
        }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn exhausted(&self) -> bool {
        self.used() >= self.limit
    }

    pub fn charge(&self, tokens: u64) {
        self.used.fetch_add(tokens, Ordering::SeqCst);
    }
}

/// One prompt/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub purpose: String,
    pub temperature: f64,
    pub messages: Vec<ChatMessage>,
    pub response: Option<String>,
    pub error: Option<String>,
}

/// Per-cell front end to a shared backend: records usage and transcripts.
pub struct LlmGateway {
    backend: Arc<dyn ChatBackend>,
    model: String,
    tag: CallTag,
    pricing: Pricing,
    budget: Option<Arc<TokenBudget>>,
    ledger: UsageLedger,
    transcript: Vec<TranscriptEntry>,
    notes: Vec<String>,
}

impl std::fmt::Debug for LlmGateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmGateway")
            .field("backend", &self.backend.name())
            .field("model", &self.model)
            .field("tag", &self.tag)
            .field("calls", &self.ledger.len())
            .finish()
    }
}

impl LlmGateway {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>, tag: CallTag) -> Self {
        LlmGateway {
            backend,
            model: model.into(),
            tag,
            pricing: Pricing::builtin(),
            budget: None,
            ledger: UsageLedger::new(),
            transcript: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn with_pricing(mut self, pricing: Pricing) -> Self {
        self.pricing = pricing;
        self
    }

    pub fn with_budget(mut self, budget: Arc<TokenBudget>) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn tag(&self) -> &CallTag {
        &self.tag
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn ledger(&self) -> &UsageLedger {
        &self.ledger
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// Free-form events such as parse fallbacks.
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Send one request and return the reply text. Every call, including a
    /// failed one, appends exactly one ledger record and one transcript entry.
    pub fn chat(
        &mut self,
        purpose: &str,
        messages: Vec<ChatMessage>,
        temperature: f64,
    ) -> Result<String, LlmError> {
        if let Some(budget) = &self.budget {
            if budget.exhausted() {
                return Err(LlmError::BudgetExceeded(budget.limit()));
            }
        }
        let request = ChatRequest::new(self.model.clone(), messages).with_temperature(temperature);
        let result = self.backend.complete(&request);
        let mut record = UsageRecord {
            agent: self.tag.agent.clone(),
            env: self.tag.env,
            level: self.tag.level.clone(),
            seed: self.tag.seed,
            model: self.model.clone(),
            purpose: purpose.to_string(),
            prompt_tokens: 0,
            completion_tokens: 0,
            cost: 0.0,
            wall_ms: 0,
            attempts: 0,
            error: None,
        };
        let entry_messages = request.messages;
        match result {
            Ok(resp) => {
                record.prompt_tokens = resp.prompt_tokens;
                record.completion_tokens = resp.completion_tokens;
                record.cost = self
                    .pricing
                    .rate(&self.model)
                    .map(|r| r.cost(resp.prompt_tokens, resp.completion_tokens))
                    .unwrap_or(0.0);
                record.wall_ms = resp.latency_ms;
                record.attempts = resp.attempts;
                if let Some(budget) = &self.budget {
                    budget.charge(resp.prompt_tokens + resp.completion_tokens);
                }
                self.ledger.push(record);
                self.transcript.push(TranscriptEntry {
                    purpose: purpose.to_string(),
                    temperature,
                    messages: entry_messages,
                    response: Some(resp.content.clone()),
                    error: None,
                });
                Ok(resp.content)
            }
            Err(e) => {
                record.attempts = e.attempts();
                record.error = Some(e.to_string());
                self.ledger.push(record);
                self.transcript.push(TranscriptEntry {
                    purpose: purpose.to_string(),
                    temperature,
                    messages: entry_messages,
                    response: None,
                    error: Some(e.to_string()),
                });
                Err(e)
            }
        }
    }
}
