use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::env::EnvId;

/// One chat call, successful or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub agent: String,
    pub env: EnvId,
    pub level: String,
    pub seed: u64,
    pub model: String,
    pub purpose: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: f64,
    pub wall_ms: u64,
    pub attempts: u32,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub records: Vec<UsageRecord>,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: UsageRecord) {
        self.records.push(record);
    }

    pub fn extend(&mut self, other: &UsageLedger) {
        self.records.extend(other.records.iter().cloned());
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn prompt_tokens(&self) -> u64 {
        self.records.iter().map(|r| r.prompt_tokens).sum()
    }

    pub fn completion_tokens(&self) -> u64 {
        self.records.iter().map(|r| r.completion_tokens).sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens() + self.completion_tokens()
    }

    pub fn total_cost(&self) -> f64 {
        self.records.iter().map(|r| r.cost).sum()
    }

    pub fn wall_ms(&self) -> u64 {
        self.records.iter().map(|r| r.wall_ms).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelRate {
    pub prompt_per_1k: f64,
    pub completion_per_1k: f64,
}

impl ModelRate {
    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        (prompt_tokens as f64 * self.prompt_per_1k + completion_tokens as f64 * self.completion_per_1k)
            / 1000.0
    }
}

/// Per-model token rates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub models: BTreeMap<String, ModelRate>,
}

impl Pricing {
    /// The rates shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml(include_str!("../../assets/pricing.toml")).expect("bundled pricing parses")
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn rate(&self, model: &str) -> Result<ModelRate, LlmError> {
        self.models
            .get(model)
            .copied()
            .ok_or_else(|| LlmError::UnknownModel(model.to_string()))
    }
}

/// Cost totals in the layout of per-environment and per-agent tables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostReport {
    pub total: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub by_env: BTreeMap<EnvId, f64>,
    pub by_agent: BTreeMap<String, f64>,
    pub by_env_agent: BTreeMap<(EnvId, String), f64>,
}

pub fn estimate_cost(ledger: &UsageLedger, pricing: &Pricing) -> Result<CostReport, LlmError> {
    let mut report = CostReport::default();
    for r in &ledger.records {
        let cost = pricing.rate(&r.model)?.cost(r.prompt_tokens, r.completion_tokens);
        report.total += cost;
        report.prompt_tokens += r.prompt_tokens;
        report.completion_tokens += r.completion_tokens;
        *report.by_env.entry(r.env).or_default() += cost;
        *report.by_agent.entry(r.agent.clone()).or_default() += cost;
        *report.by_env_agent.entry((r.env, r.agent.clone())).or_default() += cost;
    }
    Ok(report)
}
