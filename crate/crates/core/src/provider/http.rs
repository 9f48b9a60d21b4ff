use std::time::Duration;

use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use super::{ChatProvider, ChatRequest, ChatResponse, FinishReason, ProviderError, ProviderProfile, Usage};

/// Exponential backoff with full jitter: attempt `k` sleeps a uniform amount
/// in `[0, initial * factor^k]`.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub initial: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { initial: Duration::from_secs(1), factor: 2.0 }
    }
}

impl RetryPolicy {
    fn delay(&self, retry: u32) -> Duration {
        let cap = self.initial.as_secs_f64() * self.factor.powi(retry as i32);
        if cap <= 0.0 {
            return Duration::ZERO;
        }
        Duration::from_secs_f64(rand::thread_rng().gen_range(0.0..=cap))
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions` client.
pub struct HttpProvider {
    profile: ProviderProfile,
    client: reqwest::blocking::Client,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct WireResponse {
    #[serde(default)]
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: Option<WireMessage>,
    #[serde(default)]
    finish_reason: Option<String>,
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
    Fail(ProviderError),
}

impl HttpProvider {
    pub fn new(profile: ProviderProfile) -> Result<Self, ProviderError> {
        profile.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(profile.timeout_s))
            .build()
            .map_err(|e| ProviderError::InvalidProfile(e.to_string()))?;
        Ok(Self { profile, client, retry: RetryPolicy::default() })
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.profile.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, key: &str, body: &serde_json::Value, attempts: u32) -> Attempt {
        let sent = self.client.post(self.endpoint()).bearer_auth(key).json(body).send();
        let resp = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Fail(ProviderError::Transport { attempts, message: e.to_string() }),
        };
        let status = resp.status();
        if !status.is_success() {
            return Attempt::Fail(ProviderError::BadStatus(status.as_u16()));
        }
        let wire: WireResponse = match resp.json() {
            Ok(w) => w,
            Err(e) => return Attempt::Fail(ProviderError::Transport { attempts, message: e.to_string() }),
        };
        let Some(choice) = wire.choices.into_iter().next() else {
            return Attempt::Fail(ProviderError::EmptyCompletion);
        };
        let content = choice.message.and_then(|m| m.content).unwrap_or_default();
        let finish_reason = match choice.finish_reason.as_deref() {
            None | Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Error,
        };
        if content.trim().is_empty() {
            return Attempt::Fail(ProviderError::EmptyCompletion);
        }
        let usage = wire
            .usage
            .map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens })
            .unwrap_or_default();
        Attempt::Done(ChatResponse { content, finish_reason, usage, retries: 0 })
    }
}

impl ChatProvider for HttpProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let key = std::env::var(&self.profile.credential_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ProviderError::AuthMissing(self.profile.credential_env.clone()))?;
        let model = if request.model.is_empty() { &self.profile.model } else { &request.model };
        let mut body = json!({
            "model": model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        if let Some(max) = request.max_tokens {
            body["max_tokens"] = json!(max);
        }

        let mut retries = 0;
        loop {
            match self.attempt(&key, &body, retries + 1) {
                Attempt::Done(mut resp) => {
                    resp.retries = retries;
                    return Ok(resp);
                }
                Attempt::Fail(err) if err.is_transient() && retries < self.profile.max_retries => {
                    std::thread::sleep(self.retry.delay(retries));
                    retries += 1;
                }
                Attempt::Fail(err) => return Err(err),
            }
        }
    }
}
