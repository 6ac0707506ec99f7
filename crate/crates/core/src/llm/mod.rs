//! Chat-completion backends: an OpenAI-compatible HTTP client and a
//! deterministic grade oracle for offline runs.

mod http;
mod oracle;

pub use http::{BackendConfig, HttpBackend, DEFAULT_API_KEY_ENV};
pub use oracle::OracleBackend;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("giving up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("oracle cannot answer: {0}")]
    UnrecognizedPrompt(String),
}

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
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Serializes to the chat-completions request body.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(serialize_with = "compact_number")]
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Temperature 0 by default.
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>, max_tokens: u32) -> Result<Self, LlmError> {
        let req = Self { model: model.into(), messages, temperature: 0.0, max_tokens };
        req.validate()?;
        Ok(req)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, LlmError> {
        self.temperature = temperature;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let invalid = |m: &str| Err(LlmError::InvalidRequest(m.to_owned()));
        match self.messages.first() {
            None => return invalid("no messages"),
            Some(m) if m.role == Role::Assistant => return invalid("first message must be system or user"),
            _ => {}
        }
        if self.messages.iter().any(|m| m.role != Role::Assistant && m.content.is_empty()) {
            return invalid("system and user messages need content");
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return invalid("temperature must be a finite value >= 0");
        }
        if self.max_tokens == 0 {
            return invalid("max_tokens must be positive");
        }
        Ok(())
    }
}

// Integral values go out as JSON integers (`0`, not `0.0`).
fn compact_number<S: serde::Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        s.serialize_i64(*value as i64)
    } else {
        s.serialize_f64(*value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// A chat-completion endpoint. Implementations are shared across threads.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;

    /// Upper bound on concurrent in-flight requests the backend accepts.
    fn max_in_flight(&self) -> usize {
        1
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

/// `ceil(chars / 4)`; a budgeting heuristic, not a tokenizer.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}
