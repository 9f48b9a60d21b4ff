//! Chat-completion providers: an OpenAI-compatible HTTP client and a scripted
//! mock for hermetic runs.

mod http;
mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpProvider, RetryPolicy};
pub use mock::{MockProvider, MockRecord};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("credential environment variable `{0}` is not set")]
    AuthMissing(String),
    #[error("endpoint returned status {0}")]
    BadStatus(u16),
    #[error("completion contained no content")]
    EmptyCompletion,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid provider profile: {0}")]
    InvalidProfile(String),
    #[error("mock script line {line}: {message}")]
    ScriptParse { line: usize, message: String },
    #[error("mock script exhausted")]
    ScriptExhausted,
    #[error("reading mock script: {0}")]
    Io(#[from] std::io::Error),
}

impl ProviderError {
    /// Transport failures and server-side errors are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Transport { .. } => true,
            ProviderError::BadStatus(code) => *code >= 500,
            _ => false,
        }
    }
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
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn single(model: impl Into<String>, prompt: impl Into<String>, temperature: f64) -> Self {
        Self { model: model.into(), messages: vec![ChatMessage::user(prompt)], temperature, max_tokens: None }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        match self.messages.last() {
            None => Err(ProviderError::InvalidRequest("request has no messages".into())),
            Some(m) if m.role != Role::User => {
                Err(ProviderError::InvalidRequest("last message must come from the user".into()))
            }
            _ if self.temperature.is_nan() || self.temperature < 0.0 => Err(ProviderError::InvalidRequest("temperature must be >= 0".into())),
            _ => Ok(()),
        }
    }

    /// Content of the final user message.
    pub fn prompt(&self) -> &str {
        self.messages.last().map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    /// Transient failures retried before this response arrived.
    #[serde(default)]
    pub retries: u32,
}

/// Connection settings for one chat-completions endpoint. The API key itself
/// never appears here, only the name of the variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub name: String,
    pub base_url: String,
    pub model: String,
    pub credential_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    3
}

impl ProviderProfile {
    pub fn validate(&self) -> Result<(), ProviderError> {
        let url = &self.base_url;
        let rest = url
            .strip_prefix("https://")
            .or_else(|| url.strip_prefix("http://"))
            .ok_or_else(|| ProviderError::InvalidProfile(format!("base_url `{url}` must be http(s)")))?;
        if rest.is_empty() || rest.starts_with('/') || rest.contains(char::is_whitespace) {
            return Err(ProviderError::InvalidProfile(format!("base_url `{url}` is malformed")));
        }
        if self.timeout_s.is_nan() || self.timeout_s <= 0.0 {
            return Err(ProviderError::InvalidProfile("timeout_s must be > 0".into()));
        }
        if self.credential_env.trim().is_empty() {
            return Err(ProviderError::InvalidProfile("credential_env must name a variable".into()));
        }
        Ok(())
    }

    /// Profiles for the two hosted services the pipeline was tuned against.
    pub fn builtin(name: &str) -> Option<Self> {
        let (base_url, model, env) = match name {
            "openai" => ("https://api.openai.com/v1", "gpt-4-turbo-2024-04-09", "OPENAI_API_KEY"),
            "deepseek" => ("https://api.deepseek.com/v1", "deepseek-chat", "DEEPSEEK_API_KEY"),
            _ => return None,
        };
        Some(Self {
            name: name.into(),
            base_url: base_url.into(),
            model: model.into(),
            credential_env: env.into(),
            timeout_s: default_timeout(),
            max_retries: default_retries(),
        })
    }
}

/// Anything that can answer a chat request. Implementations are shared across
/// threads.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<P> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for &P {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).complete(request)
    }
}

/// Rough whitespace token count, used for mock usage accounting.
pub(crate) fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
