//! Blocking client for OpenAI-compatible `/v1/chat/completions` endpoints.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, ChatRequest, ChatResponse, LlmError};

pub const DEFAULT_API_KEY_ENV: &str = "GENRANK_API_KEY";

const BODY_EXCERPT_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub base_url: String,
    /// Name of the environment variable that holds the API key.
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub retry_base_ms: u64,
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout_ms: 60_000,
            max_retries: 3,
            retry_base_ms: 500,
            max_in_flight: 4,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        let invalid = |m: &str| Err(LlmError::InvalidRequest(m.to_owned()));
        if self.timeout_ms == 0 {
            return invalid("timeout_ms must be positive");
        }
        if self.retry_base_ms == 0 {
            return invalid("retry_base_ms must be positive");
        }
        if self.max_in_flight == 0 {
            return invalid("max_in_flight must be positive");
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return invalid("base_url must be an http(s) URL");
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Full-jitter exponential backoff: uniform in `[0, base * 2^attempt]` ms.
pub(crate) fn backoff_delay(base_ms: u64, attempt: u32, rng: &mut impl Rng) -> Duration {
    let cap = base_ms.saturating_mul(1u64.checked_shl(attempt).unwrap_or(u64::MAX));
    Duration::from_millis(rng.random_range(0..=cap))
}

struct InFlight {
    active: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Attempt {
    Done(ChatResponse),
    Retry(String),
}

pub struct HttpBackend {
    config: BackendConfig,
    api_key: String,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("config", &self.config).finish_non_exhaustive()
    }
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable. An unset
    /// variable is an error; an empty one means no `Authorization` header.
    pub fn new(config: BackendConfig) -> Result<Self, LlmError> {
        let api_key =
            std::env::var(&config.api_key_env).map_err(|_| LlmError::MissingApiKey(config.api_key_env.clone()))?;
        Self::with_api_key(config, api_key)
    }

    pub fn with_api_key(config: BackendConfig, api_key: impl Into<String>) -> Result<Self, LlmError> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            in_flight: InFlight { active: Mutex::new(0), freed: Condvar::new(), limit: config.max_in_flight },
            config,
            api_key: api_key.into(),
            agent,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn attempt(&self, url: &str, request: &ChatRequest) -> Result<Attempt, LlmError> {
        let mut call = self.agent.post(url);
        if !self.api_key.is_empty() {
            call = call.header("Authorization", format!("Bearer {}", self.api_key));
        }
        let mut response = match call.send_json(request) {
            Ok(r) => r,
            Err(e @ (ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed)) => {
                return Ok(Attempt::Retry(format!("transport: {e}")));
            }
            Err(e) => return Err(LlmError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let body = match response.body_mut().read_to_string() {
            Ok(b) => b,
            Err(e @ (ureq::Error::Timeout(_) | ureq::Error::Io(_))) => {
                return Ok(Attempt::Retry(format!("transport: {e}")));
            }
            Err(e) => return Err(LlmError::Protocol(e.to_string())),
        };
        let excerpt: String = body.chars().take(BODY_EXCERPT_CHARS).collect();
        match status {
            200..=299 => parse_response(&body).map(Attempt::Done),
            429 | 500..=599 => Ok(Attempt::Retry(format!("HTTP {status}: {excerpt}"))),
            _ => Err(LlmError::Endpoint { status, body: excerpt }),
        }
    }
}

fn parse_response(body: &str) -> Result<ChatResponse, LlmError> {
    let wire: WireResponse = serde_json::from_str(body).map_err(|e| LlmError::Protocol(e.to_string()))?;
    let choice = wire.choices.into_iter().next().ok_or_else(|| LlmError::Protocol("response has no choices".into()))?;
    let usage = wire.usage.unwrap_or(WireUsage { prompt_tokens: 0, completion_tokens: 0 });
    Ok(ChatResponse {
        content: choice.message.content.unwrap_or_default(),
        prompt_tokens: usage.prompt_tokens,
        completion_tokens: usage.completion_tokens,
    })
}

impl Backend for HttpBackend {
    /// Retries HTTP 429, 5xx and transport failures with full-jitter
    /// backoff; at most `max_retries + 1` attempts.
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let url = self.config.endpoint();
        let _permit = self.in_flight.acquire();
        let mut attempt = 0u32;
        loop {
            match self.attempt(&url, request)? {
                Attempt::Done(r) => return Ok(r),
                Attempt::Retry(last) if attempt >= self.config.max_retries => {
                    return Err(LlmError::RetriesExhausted { attempts: attempt + 1, last });
                }
                Attempt::Retry(_) => {
                    std::thread::sleep(backoff_delay(self.config.retry_base_ms, attempt, &mut rand::rng()));
                    attempt += 1;
                }
            }
        }
    }

    fn max_in_flight(&self) -> usize {
        self.config.max_in_flight
    }
}
