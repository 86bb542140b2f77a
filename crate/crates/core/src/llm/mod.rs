//! Chat-completion access behind a provider-neutral gateway.

#[cfg(feature = "http-backend")]
pub mod http;
pub mod scripted;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use scripted::{Fixture, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sample_tag: String,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            system_prompt: system_prompt.into(),
            messages: vec![ChatMessage {
                role: Role::User,
                text: user.into(),
            }],
            temperature: 0.0,
            max_tokens: 1024,
            sample_tag: String::new(),
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.sample_tag = tag.into();
        self
    }

    pub fn last_user_message(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.text.as_str())
    }

    fn check(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::Request("request has no messages".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Request(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub latency_ms: u64,
    pub backend_id: String,
    pub token_usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    #[default]
    Scripted,
}

/// Backend selection. Holds the *name* of the environment variable carrying
/// the credential, never the credential itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub credential_env: Option<String>,
    pub model: String,
    pub timeout_s: u64,
    pub max_retries_transport: u32,
    pub backoff_ms: u64,
    /// Fixture file for the scripted backend.
    pub fixtures: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            endpoint: None,
            credential_env: None,
            model: "gpt-3.5-turbo".into(),
            timeout_s: 60,
            max_retries_transport: 3,
            backoff_ms: 500,
            fixtures: None,
        }
    }
}

impl BackendConfig {
    pub fn check(&self) -> Result<(), LlmError> {
        if self.kind == BackendKind::Http {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(LlmError::Config("http backend requires backend.endpoint".into()));
            }
            if self.credential_env.as_deref().is_none_or(str::is_empty) {
                return Err(LlmError::Config(
                    "http backend requires backend.credential_env".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    Request(String),
    #[error("credential variable {var} is not set")]
    Credential { var: String },
    #[error("no fixture matches message {message:?}")]
    NoFixture { message: String },
    #[error("backend rejected the credential (HTTP {status})")]
    Auth { status: u16 },
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed backend response: {0}")]
    Response(String),
    #[error("sample {index} failed: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<LlmError>,
    },
}

/// Failure of a single backend call, before gateway retry policy.
#[derive(Debug)]
pub enum CallError {
    /// Timeouts and 5xx responses; the gateway retries these.
    Retryable(String),
    Fatal(LlmError),
}

/// Raw reply of one backend call.
#[derive(Debug, Clone)]
pub struct BackendReply {
    pub text: String,
    pub token_usage: Option<TokenUsage>,
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;

    fn call(&self, request: &ChatRequest) -> Result<BackendReply, CallError>;

    /// True when replies depend on call order, forcing sequential sampling.
    fn ordered(&self) -> bool {
        false
    }
}

#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    config: BackendConfig,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.id())
            .field("config", &self.config)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, config: BackendConfig) -> Self {
        Gateway { backend, config }
    }

    /// Builds the configured backend. Credentials are resolved here, so a
    /// missing variable fails before any network traffic.
    pub fn from_config(config: &BackendConfig) -> Result<Gateway, LlmError> {
        config.check()?;
        let backend: Arc<dyn ChatBackend> = match config.kind {
            BackendKind::Scripted => {
                let path = config
                    .fixtures
                    .as_ref()
                    .ok_or_else(|| LlmError::Config("scripted backend requires a fixture file".into()))?;
                Arc::new(ScriptedBackend::from_file(path)?)
            }
            #[cfg(feature = "http-backend")]
            BackendKind::Http => Arc::new(http::HttpBackend::new(config)?),
            #[cfg(not(feature = "http-backend"))]
            BackendKind::Http => {
                return Err(LlmError::Config("built without the http-backend feature".into()))
            }
        };
        Ok(Gateway::new(backend, config.clone()))
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    /// One completion with transport retry and exponential backoff.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.check()?;
        let start = Instant::now();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.backend.call(request) {
                Ok(reply) => {
                    return Ok(ChatResponse {
                        text: reply.text,
                        latency_ms: u64::try_from(start.elapsed().as_millis()).unwrap_or(u64::MAX),
                        backend_id: self.backend.id().to_string(),
                        token_usage: reply.token_usage,
                    })
                }
                Err(CallError::Fatal(e)) => return Err(e),
                Err(CallError::Retryable(message)) => {
                    if attempt > self.config.max_retries_transport {
                        return Err(LlmError::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    let delay = self
                        .config
                        .backoff_ms
                        .saturating_mul(1u64 << (attempt - 1).min(16));
                    log::warn!("transport error on attempt {attempt}: {message}; retrying");
                    if delay > 0 {
                        thread::sleep(Duration::from_millis(delay));
                    }
                }
            }
        }
    }

    /// `n` samples of the same request, at most `parallelism` in flight.
    /// Results come back in sample order; any failed sample fails the batch.
    pub fn complete_n(
        &self,
        request: &ChatRequest,
        n: usize,
        parallelism: usize,
    ) -> Result<Vec<ChatResponse>, LlmError> {
        if n == 0 || parallelism == 0 {
            return Err(LlmError::Request(
                "complete_n needs n >= 1 and parallelism >= 1".into(),
            ));
        }
        let tagged: Vec<ChatRequest> = (0..n)
            .map(|i| {
                let mut r = request.clone();
                r.sample_tag = format!("{}#{i}", request.sample_tag);
                r
            })
            .collect();
        let mut results: Vec<Option<Result<ChatResponse, LlmError>>> = (0..n).map(|_| None).collect();
        let width = if self.backend.ordered() { 1 } else { parallelism };
        for (chunk_index, chunk) in tagged.chunks(width).enumerate() {
            let base = chunk_index * width;
            if chunk.len() == 1 {
                results[base] = Some(self.complete(&chunk[0]));
                continue;
            }
            let outcomes: Vec<_> = thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|r| scope.spawn(move || self.complete(r)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("sampling thread panicked"))
                    .collect()
            });
            for (offset, outcome) in outcomes.into_iter().enumerate() {
                results[base + offset] = Some(outcome);
            }
        }
        results
            .into_iter()
            .enumerate()
            .map(|(index, r)| {
                r.expect("every sample ran").map_err(|e| LlmError::Sample {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}
