//! Replay backend for tests and reproducible fixtures.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, Backend, BackendError, GenerationRequest, GenerationResponse, Purpose, UsageRecord};
use crate::error::{Error, Result};

/// One canned reply. Usage is estimated from the texts unless given.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedReply {
    Text(String),
    Metered {
        text: String,
        input_tokens: u64,
        output_tokens: u64,
    },
}

impl From<&str> for ScriptedReply {
    fn from(s: &str) -> Self {
        ScriptedReply::Text(s.to_owned())
    }
}

impl From<String> for ScriptedReply {
    fn from(s: String) -> Self {
        ScriptedReply::Text(s)
    }
}

/// Reads a JSON array of replies (strings or metered objects).
pub fn read_replies(path: &Path) -> Result<Vec<ScriptedReply>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// Serves replies from a queue in call order.
///
/// Reset-selection requests are served from a separate queue when one is
/// configured, and rejected as unsupported otherwise, so plan scripts are not
/// consumed by reset events.
pub struct ScriptedBackend {
    model: String,
    replies: Mutex<VecDeque<ScriptedReply>>,
    reset_replies: Option<Mutex<VecDeque<ScriptedReply>>>,
    seen: Mutex<Vec<GenerationRequest>>,
}

impl ScriptedBackend {
    pub fn new<I, R>(replies: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: Into<ScriptedReply>,
    {
        Self {
            model: "gemini-1.5-flash".to_owned(),
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            reset_replies: None,
            seen: Mutex::new(Vec::new()),
        }
    }

    /// Backend over the replies in a file read by [`read_replies`].
    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(read_replies(path)?))
    }

    pub fn with_model(mut self, model: &str) -> Self {
        self.model = model.to_owned();
        self
    }

    pub fn with_reset_replies<I, R>(mut self, replies: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: Into<ScriptedReply>,
    {
        self.reset_replies = Some(Mutex::new(replies.into_iter().map(Into::into).collect()));
        self
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("script poisoned").len()
    }

    /// Every request received so far, in order.
    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.seen.lock().expect("script poisoned").clone()
    }
}

impl Backend for ScriptedBackend {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        self.seen.lock().expect("script poisoned").push(request.clone());
        let queue = match (request.tag.purpose, &self.reset_replies) {
            (Purpose::Propose, _) => &self.replies,
            (Purpose::ResetSelection, Some(q)) => q,
            (Purpose::ResetSelection, None) => {
                return Err(BackendError::Unsupported("reset selection"));
            }
        };
        let reply = queue
            .lock()
            .expect("script poisoned")
            .pop_front()
            .ok_or(BackendError::Exhausted)?;
        let (text, input, output) = match reply {
            ScriptedReply::Text(text) => {
                let out = estimate_tokens(&text);
                (text, estimate_tokens(&request.prompt), out)
            }
            ScriptedReply::Metered {
                text,
                input_tokens,
                output_tokens,
            } => (text, input_tokens, output_tokens),
        };
        Ok(GenerationResponse {
            text,
            usage: UsageRecord::new(input, output, &self.model),
        })
    }
}
