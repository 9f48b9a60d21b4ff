//! Progressive weight attenuation, the uniform-draw verification gate and
//! the verify/rectify loop wrapped around every reasoning step.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dimension, DimensionWeightState, VerificationResult};
use crate::prompt::{bind, parse_score, PromptError, TemplateId};
use crate::provider::{ChatResponse, ProviderError};
use crate::session::Session;
use crate::trace::{EventKind, Payload, VerifySource};

/// Impact score and weight floor for one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionParams {
    pub impact: f64,
    pub w_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RectifyConfig {
    pub enabled: bool,
    pub attenuation: bool,
    pub pass_threshold: f64,
    pub max_retries: u32,
    pub alpha: f64,
    pub beta: f64,
    pub strategic: DimensionParams,
    pub tactical: DimensionParams,
    pub operational: DimensionParams,
}

impl Default for RectifyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            attenuation: true,
            pass_threshold: 0.8,
            max_retries: 3,
            alpha: 0.1,
            beta: 1.2,
            strategic: DimensionParams { impact: 1.0, w_min: 0.8 },
            tactical: DimensionParams { impact: 2.0, w_min: 0.6 },
            operational: DimensionParams { impact: 3.0, w_min: 0.5 },
        }
    }
}

impl RectifyConfig {
    pub fn params(&self, dimension: Dimension) -> &DimensionParams {
        match dimension {
            Dimension::Strategic => &self.strategic,
            Dimension::Tactical => &self.tactical,
            Dimension::Operational => &self.operational,
        }
    }

    pub fn params_mut(&mut self, dimension: Dimension) -> &mut DimensionParams {
        match dimension {
            Dimension::Strategic => &mut self.strategic,
            Dimension::Tactical => &mut self.tactical,
            Dimension::Operational => &mut self.operational,
        }
    }

    pub fn initial_state(&self, dimension: Dimension) -> DimensionWeightState {
        let p = self.params(dimension);
        DimensionWeightState::new(dimension, p.w_min, p.impact, self.alpha, self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pass_threshold) {
            return Err(Error::Config(format!("pass_threshold {} outside [0,1]", self.pass_threshold)));
        }
        for d in Dimension::ALL {
            self.initial_state(d).validate().map_err(Error::Config)?;
        }
        Ok(())
    }
}

/// `max(w_min, w_current * (1 - alpha*f)^(beta*impact))`. Does not mutate the state.
pub fn attenuate(state: &DimensionWeightState) -> Result<f64> {
    if state.freq == 0 {
        return Ok(state.w_current.max(state.w_min));
    }
    let base = f64::mul_add(-state.alpha, state.freq as f64, 1.0);
    if base <= 0.0 {
        return Err(Error::InvalidAttenuation { alpha: state.alpha, freq: state.freq });
    }
    let factor = base.powf(state.beta * state.impact);
    Ok((state.w_current * factor).max(state.w_min))
}

/// Draws `u ~ U(0,1)` and reports whether verification should run (`u <= w`).
pub fn should_verify(state: &DimensionWeightState, rng: &mut impl Rng) -> (bool, f64) {
    let u: f64 = rng.sample(Open01);
    (u <= state.w_current, u)
}

/// Scores `output` with the dimension's verification template and records the verdict.
pub fn verify(
    session: &mut Session<'_>,
    dimension: Dimension,
    unit: &str,
    original_prompt: &str,
    output: &str,
    pass_threshold: f64,
) -> Result<VerificationResult> {
    let prompt = session.catalog.render(
        TemplateId::verification(dimension),
        &bind([("original_prompt", original_prompt), ("current_rationale", output)]),
    )?;
    let outcome = session.complete(&prompt);
    let raw = outcome.as_ref().map(|r| r.content.clone()).unwrap_or_default();
    let (score, message) = match parse_score(&raw) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let passed = score.is_some_and(|s| s >= pass_threshold);
    let payload = Payload { score, passed: Some(passed), source: Some(VerifySource::Llm), message, ..Payload::default() };
    session.record_call(EventKind::Verify, Some(dimension), unit, &prompt, outcome, payload)?;
    Ok(VerificationResult { score, passed, raw_response: raw })
}

/// Asks for a corrected output and bumps the dimension's rectification counter.
pub fn rectify(
    session: &mut Session<'_>,
    state: &mut DimensionWeightState,
    unit: &str,
    previous_prompt: &str,
    previous_output: &str,
) -> Result<String> {
    let prompt = session
        .catalog
        .render(TemplateId::Rectify, &bind([("prev_prompt", previous_prompt), ("prev_output", previous_output)]))?;
    let outcome = session.complete(&prompt);
    let f_after = state.freq + 1;
    let payload = Payload { f: Some(f_after), ..Payload::default() };
    let out = session.record_call(EventKind::Rectify, Some(state.dimension), unit, &prompt, outcome, payload)?;
    state.freq = f_after;
    Ok(out)
}

struct Candidate<T> {
    score: Option<f64>,
    value: T,
}

/// Owns the three per-dimension weight states and the run's gate RNG.
#[derive(Debug, Clone)]
pub struct SelfRectifier {
    config: RectifyConfig,
    states: [DimensionWeightState; 3],
    rng: ChaCha8Rng,
}

impl SelfRectifier {
    pub fn new(config: RectifyConfig, seed: u64) -> Self {
        let states = Dimension::ALL.map(|d| config.initial_state(d));
        Self { config, states, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn config(&self) -> &RectifyConfig {
        &self.config
    }

    pub fn state(&self, dimension: Dimension) -> &DimensionWeightState {
        &self.states[dimension.index()]
    }

    pub fn states(&self) -> &[DimensionWeightState; 3] {
        &self.states
    }

    /// Overrides a dimension's current weight, clamped to `[w_min, 1]`.
    pub fn set_weight(&mut self, dimension: Dimension, w: f64) {
        let state = &mut self.states[dimension.index()];
        state.w_current = w.clamp(state.w_min, 1.0);
    }

    /// Issues the generation call for `prompt`, then guards its output.
    pub fn guard<T>(
        &mut self,
        session: &mut Session<'_>,
        dimension: Dimension,
        unit: &str,
        prompt: &str,
        parse: impl Fn(&str) -> Result<T, PromptError>,
    ) -> Result<T> {
        let outcome = session.complete(prompt);
        self.guard_output(session, dimension, unit, prompt, outcome, parse)
    }

    /// Guards an already issued generation call: records it, runs the gate,
    /// loops verify/rectify on failure and finally commits the attenuated
    /// weight.
    pub fn guard_output<T>(
        &mut self,
        session: &mut Session<'_>,
        dimension: Dimension,
        unit: &str,
        prompt: &str,
        outcome: Result<ChatResponse, ProviderError>,
        parse: impl Fn(&str) -> Result<T, PromptError>,
    ) -> Result<T> {
        let mut output = session.record_call(EventKind::Generate, Some(dimension), unit, prompt, outcome, Payload::default())?;

        if !self.config.enabled {
            return parse(&output).map_err(|e| {
                let _ = session.error_event(Some(dimension), unit, &e.to_string());
                Error::Prompt(e)
            });
        }

        let idx = dimension.index();
        let (triggered, u) = should_verify(&self.states[idx], &mut self.rng);
        let gate = Payload {
            u: Some(u),
            w: Some(self.states[idx].w_current),
            triggered: Some(triggered),
            ..Payload::default()
        };
        session.trace.record(EventKind::GateDraw, Some(dimension), Some(unit.to_string()), gate)?;

        let mut candidates: Vec<Candidate<T>> = Vec::new();
        let mut last_error = None;
        let mut accepted = None;
        for attempt in 0..=self.config.max_retries {
            match parse(&output) {
                Err(e) => {
                    let payload = Payload {
                        passed: Some(false),
                        source: Some(VerifySource::Parse),
                        message: Some(e.to_string()),
                        ..Payload::default()
                    };
                    session.trace.record(EventKind::Verify, Some(dimension), Some(unit.to_string()), payload)?;
                    last_error = Some(e);
                }
                Ok(value) if triggered => {
                    let verdict = verify(session, dimension, unit, prompt, &output, self.config.pass_threshold)?;
                    if verdict.passed {
                        accepted = Some(value);
                        break;
                    }
                    candidates.push(Candidate { score: verdict.score, value });
                }
                Ok(value) => {
                    accepted = Some(value);
                    break;
                }
            }
            if attempt == self.config.max_retries {
                break;
            }
            output = rectify(session, &mut self.states[idx], unit, prompt, &output)?;
        }

        self.commit_attenuation(session, dimension, unit)?;

        if let Some(value) = accepted {
            return Ok(value);
        }
        let best = best_candidate(candidates);
        let reason = last_error.unwrap_or(PromptError::NoScoreFound);
        let message = match &best {
            Some(_) => "rectification exhausted; keeping the highest-scoring candidate".to_string(),
            None => format!("rectification exhausted with no parseable candidate: {reason}"),
        };
        let payload = Payload { exhausted: true, message: Some(message), ..Payload::default() };
        session.trace.record(EventKind::Error, Some(dimension), Some(unit.to_string()), payload)?;
        best.ok_or(Error::ExhaustedRectification { dimension, unit: unit.to_string(), reason })
    }

    fn commit_attenuation(&mut self, session: &mut Session<'_>, dimension: Dimension, unit: &str) -> Result<()> {
        if !self.config.attenuation {
            return Ok(());
        }
        let state = &mut self.states[dimension.index()];
        let w_before = state.w_current;
        let (w_after, message) = match attenuate(state) {
            Ok(w) => (w, None),
            Err(e) => (state.w_min, Some(format!("{e}; weight saturated at its floor"))),
        };
        state.w_current = w_after;
        let payload = Payload {
            w_before: Some(w_before),
            w_after: Some(w_after),
            f: Some(state.freq),
            alpha: Some(state.alpha),
            beta: Some(state.beta),
            impact: Some(state.impact),
            w_min: Some(state.w_min),
            message,
            ..Payload::default()
        };
        session.trace.record(EventKind::Attenuate, Some(dimension), Some(unit.to_string()), payload)?;
        Ok(())
    }
}

// Highest score wins; ties and unscored candidates fall back to the latest one.
fn best_candidate<T>(candidates: Vec<Candidate<T>>) -> Option<T> {
    let mut best: Option<Candidate<T>> = None;
    for c in candidates {
        let take = match &best {
            None => true,
            Some(b) => c.score.unwrap_or(f64::NEG_INFINITY) >= b.score.unwrap_or(f64::NEG_INFINITY),
        };
        if take {
            best = Some(c);
        }
    }
    best.map(|c| c.value)
}
