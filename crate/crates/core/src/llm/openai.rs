use std::env;
use std::thread;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::header::{AUTHORIZATION, CONTENT_TYPE};
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError, RateLimiter, DEFAULT_MODEL};

const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// Exponential backoff schedule for retryable failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base: Duration::from_secs(1),
            factor: 2.0,
            max_attempts: 6,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, where `attempt` counts from 1.
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base.mul_f64(self.factor.powi(attempt.saturating_sub(1) as i32))
    }
}

/// Backend speaking the `/chat/completions` wire format.
#[derive(Debug)]
pub struct OpenAiBackend {
    client: Client,
    base_url: String,
    api_key: String,
    model: String,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

enum Failure {
    Retry(LlmError),
    Fatal(LlmError),
}

impl OpenAiBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        let client = Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .expect("HTTP client construction");
        OpenAiBackend {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            model: model.into(),
            retry: RetryPolicy::default(),
            limiter: RateLimiter::per_minute(0),
        }
    }

    /// Reads `LLM_API_KEY` (required), `LLM_BASE_URL` and `LLM_MODEL`.
    pub fn from_env() -> Result<Self, LlmError> {
        let key = env::var("LLM_API_KEY").map_err(|_| LlmError::Config("LLM_API_KEY is not set".into()))?;
        let base = env::var("LLM_BASE_URL").unwrap_or_else(|_| DEFAULT_BASE_URL.to_string());
        let model = env::var("LLM_MODEL").unwrap_or_else(|_| DEFAULT_MODEL.to_string());
        Ok(Self::new(base, key, model))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, rpm: u32) -> Self {
        self.limiter = RateLimiter::per_minute(rpm);
        self
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    /// The JSON body sent for `request`.
    pub fn request_body(request: &ChatRequest) -> Value {
        json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }

    fn attempt(&self, body: &str, attempt: u32) -> Result<ChatResponse, Failure> {
        self.limiter.acquire();
        let started = Instant::now();
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .header(AUTHORIZATION, format!("Bearer {}", self.api_key))
            .header(CONTENT_TYPE, "application/json")
            .body(body.to_string())
            .send()
            .map_err(|e| {
                Failure::Retry(LlmError::Transport {
                    attempts: attempt,
                    message: e.to_string(),
                })
            })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| {
            Failure::Retry(LlmError::Transport {
                attempts: attempt,
                message: e.to_string(),
            })
        })?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(Failure::Fatal(LlmError::AuthError(text))),
            429 => return Err(Failure::Retry(LlmError::RateLimitedExhausted { attempts: attempt })),
            500..=599 => {
                return Err(Failure::Retry(LlmError::Transport {
                    attempts: attempt,
                    message: format!("HTTP {status}"),
                }))
            }
            _ => return Err(Failure::Fatal(LlmError::Http { status, body: text })),
        }
        let latency_ms = started.elapsed().as_millis() as u64;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Fatal(LlmError::MalformedResponse(e.to_string())))?;
        let content = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Failure::Fatal(LlmError::MalformedResponse("missing choices[0].message.content".into())))?
            .to_string();
        let usage = |field: &str| v.pointer(&format!("/usage/{field}")).and_then(Value::as_u64).unwrap_or(0);
        Ok(ChatResponse {
            content,
            prompt_tokens: usage("prompt_tokens"),
            completion_tokens: usage("completion_tokens"),
            latency_ms,
            attempts: attempt,
        })
    }
}

impl ChatBackend for OpenAiBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        if request.messages.is_empty() {
            return Err(LlmError::EmptyRequest);
        }
        let body = Self::request_body(request).to_string();
        let mut attempt = 1;
        loop {
            match self.attempt(&body, attempt) {
                Ok(resp) => return Ok(resp),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(e)) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(e);
                    }
                    log::warn!("chat call attempt {attempt} failed: {e}; retrying");
                    thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
            }
        }
    }

    fn name(&self) -> &str {
        "openai"
    }
}
