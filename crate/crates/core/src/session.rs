//! Shared context for every model call made during a run: provider,
//! templates, sampling settings and the trace.

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::model::Dimension;
use crate::prompt::TemplateCatalog;
use crate::provider::{ChatProvider, ChatRequest, ChatResponse, ProviderError};
use crate::trace::{EventKind, Payload, TraceLog};

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

pub struct Session<'p> {
    pub provider: &'p dyn ChatProvider,
    pub catalog: TemplateCatalog,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub trace: TraceLog,
}

impl<'p> Session<'p> {
    pub fn new(provider: &'p dyn ChatProvider, trace: TraceLog) -> Self {
        Self {
            provider,
            catalog: TemplateCatalog::builtin(),
            model: String::new(),
            temperature: 0.3,
            max_tokens: None,
            trace,
        }
    }

    pub fn request(&self, prompt: &str) -> ChatRequest {
        let mut req = ChatRequest::single(self.model.clone(), prompt, self.temperature);
        req.max_tokens = self.max_tokens;
        req
    }

    /// Raw provider call without tracing.
    pub fn complete(&self, prompt: &str) -> Result<ChatResponse, ProviderError> {
        self.provider.complete(&self.request(prompt))
    }

    /// Records the outcome of one provider call as an event of `kind`;
    /// failures are logged as an `Error` event and propagated.
    pub fn record_call(
        &mut self,
        kind: EventKind,
        dimension: Option<Dimension>,
        unit: &str,
        prompt: &str,
        outcome: Result<ChatResponse, ProviderError>,
        extra: Payload,
    ) -> Result<String> {
        match outcome {
            Ok(resp) => {
                let payload = Payload {
                    call: true,
                    prompt_hash: Some(sha256_hex(prompt)),
                    response_hash: Some(sha256_hex(&resp.content)),
                    retries: Some(resp.retries),
                    ..extra
                };
                self.trace.record(kind, dimension, Some(unit.to_string()), payload)?;
                Ok(resp.content)
            }
            Err(err) => {
                self.error_event(dimension, unit, &err.to_string())?;
                Err(err.into())
            }
        }
    }

    /// Calls the provider and records the call.
    pub fn call(
        &mut self,
        kind: EventKind,
        dimension: Option<Dimension>,
        unit: &str,
        prompt: &str,
        extra: Payload,
    ) -> Result<String> {
        let outcome = self.complete(prompt);
        self.record_call(kind, dimension, unit, prompt, outcome, extra)
    }

    pub fn error_event(&mut self, dimension: Option<Dimension>, unit: &str, message: &str) -> Result<()> {
        let payload = Payload { message: Some(message.to_string()), ..Payload::default() };
        self.trace.record(EventKind::Error, dimension, Some(unit.to_string()), payload)?;
        Ok(())
    }
}
