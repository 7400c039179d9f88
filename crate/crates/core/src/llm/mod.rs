//! Text generation: backends, prompt assembly and usage metering.
//!
//! Three backends implement [`Backend`]: [`scripted::ScriptedBackend`]
//! replays canned replies for tests, [`synthetic::SyntheticBackend`] mutates
//! parent plans with task-aware edits for offline runs, and
//! [`remote::RemoteBackend`] talks to a text-completion HTTP endpoint.
//! [`Generator`] wraps a backend and appends one [`UsageRecord`] per call to
//! its ledger, including calls whose output is later rejected.

pub mod prompt;
pub mod remote;
pub mod scripted;
pub mod synthetic;
pub mod usage;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidate::Birth;
pub use usage::{accumulate_cost, CostSummary, ModelPrice, PriceTable, UsageRecord};

/// What a request is for. Backends that synthesise replies need to know.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purpose {
    /// Propose a plan (initial, recombined or refined).
    Propose,
    /// Choose diverse elites for an island reset.
    ResetSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestTag {
    pub run_id: String,
    pub birth: Birth,
    /// 1-based attempt number within one logical turn.
    pub attempt: usize,
    pub purpose: Purpose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub tag: RequestTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    pub usage: UsageRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    /// A replay script ran out of replies. Fatal for the run.
    #[error("script exhausted")]
    Exhausted,
    /// Network or server failure after the backend's own retries.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The server answered with something that breaks the wire contract.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// The backend cannot serve this kind of request.
    #[error("unsupported request: {0}")]
    Unsupported(&'static str),
    #[error("empty prompt")]
    EmptyPrompt,
}

impl BackendError {
    /// Fatal errors stop the whole search; the rest only burn an attempt.
    pub fn is_fatal(&self) -> bool {
        matches!(self, BackendError::Exhausted)
    }
}

pub trait Backend: Send + Sync {
    /// Model name recorded in the usage ledger and looked up in price tables.
    fn model_name(&self) -> &str;

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError>;
}

/// Approximate token count for backends that do not meter: whitespace words
/// times 4/3, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    let words = text.split_whitespace().count() as u64;
    (words * 4).div_ceil(3)
}

/// A backend plus the run's append-only usage ledger.
pub struct Generator {
    backend: Arc<dyn Backend>,
    ledger: Mutex<Vec<UsageRecord>>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Generator {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            ledger: Mutex::new(Vec::new()),
            temperature: 1.0,
            max_output_tokens: 4096,
        }
    }

    pub fn model_name(&self) -> &str {
        self.backend.model_name()
    }

    pub fn request(&self, prompt: String, tag: RequestTag) -> GenerationRequest {
        GenerationRequest {
            prompt,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            tag,
        }
    }

    /// One backend call. Exactly one ledger entry is appended whatever the
    /// outcome; failed calls are recorded with the prompt's estimated input
    /// tokens and no output.
    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let result = if request.prompt.trim().is_empty() {
            Err(BackendError::EmptyPrompt)
        } else {
            self.backend.complete(request)
        };
        let record = match &result {
            Ok(response) => response.usage.clone(),
            Err(_) => UsageRecord::new(estimate_tokens(&request.prompt), 0, self.model_name()),
        };
        self.ledger.lock().expect("ledger poisoned").push(record);
        result
    }

    pub fn calls(&self) -> usize {
        self.ledger.lock().expect("ledger poisoned").len()
    }

    pub fn ledger(&self) -> Vec<UsageRecord> {
        self.ledger.lock().expect("ledger poisoned").clone()
    }

    /// Ledger entries from index `start` on.
    pub fn ledger_since(&self, start: usize) -> Vec<UsageRecord> {
        let ledger = self.ledger.lock().expect("ledger poisoned");
        ledger.get(start..).map(<[_]>::to_vec).unwrap_or_default()
    }
}

/// Result of trying to obtain one parseable reply for a turn.
#[derive(Debug)]
pub struct Attempts<T> {
    /// Raw text and parsed value of the first acceptable reply.
    pub accepted: Option<(String, T)>,
    /// Usage of every call made for this turn.
    pub usage: Vec<UsageRecord>,
    pub fatal: Option<BackendError>,
}

/// Calls the generator up to `n_retries` times until `parse` accepts a reply.
///
/// `should_stop` is checked before each call so a solved run makes no
/// further calls.
pub fn generate_parsed<T, E>(
    generator: &Generator,
    prompt: &str,
    tag: RequestTag,
    n_retries: usize,
    should_stop: impl Fn() -> bool,
    parse: impl Fn(&str) -> Result<T, E>,
) -> Attempts<T> {
    let mut usage = Vec::new();
    for attempt in 1..=n_retries.max(1) {
        if should_stop() {
            break;
        }
        let request = generator.request(
            prompt.to_owned(),
            RequestTag {
                attempt,
                ..tag.clone()
            },
        );
        match generator.generate(&request) {
            Ok(response) => {
                usage.push(response.usage);
                if let Ok(value) = parse(&response.text) {
                    return Attempts {
                        accepted: Some((response.text, value)),
                        usage,
                        fatal: None,
                    };
                }
            }
            Err(err) => {
                usage.push(UsageRecord::new(estimate_tokens(prompt), 0, generator.model_name()));
                if err.is_fatal() {
                    return Attempts {
                        accepted: None,
                        usage,
                        fatal: Some(err),
                    };
                }
                if matches!(err, BackendError::Unsupported(_)) {
                    break;
                }
                log::warn!("generation attempt {attempt} failed: {err}");
            }
        }
    }
    Attempts {
        accepted: None,
        usage,
        fatal: None,
    }
}
