use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::Deserialize;

use super::{approx_tokens, ChatProvider, ChatRequest, ChatResponse, FinishReason, ProviderError, Usage};

/// One scripted answer.
#[derive(Debug, Clone)]
pub struct MockRecord {
    pub pattern: Option<Regex>,
    pub response: String,
    /// Sticky records answer every matching call and are never consumed.
    pub repeat: bool,
}

impl MockRecord {
    pub fn plain(response: impl Into<String>) -> Self {
        Self { pattern: None, response: response.into(), repeat: false }
    }

    pub fn matching(pattern: &str, response: impl Into<String>) -> Self {
        Self { pattern: Some(Regex::new(pattern).expect("valid pattern")), response: response.into(), repeat: false }
    }

    pub fn sticky(mut self) -> Self {
        self.repeat = true;
        self
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    #[serde(default, rename = "match")]
    pattern: Option<String>,
    response: String,
    #[serde(default)]
    repeat: bool,
}

#[derive(Debug, Default)]
struct ScriptState {
    records: Vec<MockRecord>,
    consumed: Vec<bool>,
    prompts: Vec<String>,
}

/// Deterministic stand-in for a chat endpoint.
///
/// Each call is answered by the first unconsumed record whose pattern matches
/// the final user message; failing that, by the next unconsumed record that
/// has no pattern. Consumption happens under one lock, so the order is fixed
/// by call order.
#[derive(Debug, Default)]
pub struct MockProvider {
    state: Mutex<ScriptState>,
}

impl MockProvider {
    pub fn from_records(records: Vec<MockRecord>) -> Self {
        let consumed = vec![false; records.len()];
        Self { state: Mutex::new(ScriptState { records, consumed, prompts: Vec::new() }) }
    }

    /// Answers with the given responses in order.
    pub fn queue<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_records(responses.into_iter().map(MockRecord::plain).collect())
    }

    pub fn parse_script(text: &str) -> Result<Self, ProviderError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(line)
                .map_err(|e| ProviderError::ScriptParse { line: line_no, message: e.to_string() })?;
            let pattern = raw
                .pattern
                .map(|p| Regex::new(&p))
                .transpose()
                .map_err(|e| ProviderError::ScriptParse { line: line_no, message: e.to_string() })?;
            records.push(MockRecord { pattern, response: raw.response, repeat: raw.repeat });
        }
        Ok(Self::from_records(records))
    }

    pub fn load_script(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_script(&text)
    }

    /// Records still available (sticky records count as available).
    pub fn remaining(&self) -> usize {
        let state = self.state.lock().unwrap();
        state.consumed.iter().filter(|c| !**c).count()
    }

    /// Every prompt received so far, in arrival order.
    pub fn prompts(&self) -> Vec<String> {
        self.state.lock().unwrap().prompts.clone()
    }

    pub fn call_count(&self) -> usize {
        self.state.lock().unwrap().prompts.len()
    }
}

impl ChatProvider for MockProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        request.validate()?;
        let prompt = request.prompt();
        let mut state = self.state.lock().unwrap();
        state.prompts.push(prompt.to_string());

        let available = |i: usize, st: &ScriptState| !st.consumed[i];
        let hit = (0..state.records.len())
            .find(|&i| {
                available(i, &state) && state.records[i].pattern.as_ref().is_some_and(|re| re.is_match(prompt))
            })
            .or_else(|| (0..state.records.len()).find(|&i| available(i, &state) && state.records[i].pattern.is_none()))
            .ok_or(ProviderError::ScriptExhausted)?;

        if !state.records[hit].repeat {
            state.consumed[hit] = true;
        }
        let content = state.records[hit].response.clone();
        Ok(ChatResponse {
            usage: Usage { prompt_tokens: approx_tokens(prompt), completion_tokens: approx_tokens(&content) },
            content,
            finish_reason: FinishReason::Stop,
            retries: 0,
        })
    }
}
