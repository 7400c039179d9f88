//! The evaluator contract shared by every task.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::llm::prompt::PromptTemplate;
use crate::tasks::meeting::MeetingPlan;
use crate::tasks::steg::StegSolution;
use crate::tasks::trip::TripItinerary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Trip,
    Meeting,
    Steg,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Trip => "trip",
            TaskKind::Meeting => "meeting",
            TaskKind::Steg => "steg",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trip" => Ok(TaskKind::Trip),
            "meeting" => Ok(TaskKind::Meeting),
            "steg" | "stegpoet" => Ok(TaskKind::Steg),
            other => Err(format!("unknown task kind `{other}`")),
        }
    }
}

/// Outcome of scoring one plan.
///
/// `score` is the task-native score (higher is better). `normalized` is the
/// same score shifted so that the best attainable value is zero; the shift is
/// constant per instance, so rankings under either are identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub score: f64,
    pub normalized: f64,
    /// One line per violated constraint or format failure.
    pub feedback: Vec<String>,
    /// Informational lines (not violations), e.g. friends left unmet.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// False when the plan could not be parsed or broke a hard format rule.
    pub valid: bool,
    pub solved: bool,
}

impl EvaluationResult {
    /// Whether the result carries no violation feedback.
    pub fn is_clean(&self) -> bool {
        self.feedback.is_empty()
    }

    /// Short pass/fail verdict, kept in prompts even when feedback is hidden.
    pub fn verdict(&self) -> &'static str {
        if self.solved {
            "all constraints satisfied"
        } else if !self.valid {
            "invalid format"
        } else if self.feedback.is_empty() {
            "no violations found, but not known to be optimal"
        } else {
            "constraints violated"
        }
    }
}

/// A parsed plan, tagged by task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "plan", rename_all = "kebab-case")]
pub enum Plan {
    Trip(TripItinerary),
    Meeting(MeetingPlan),
    Steg(StegSolution),
    /// Free-form structured payload for evaluators defined outside this crate.
    Other(serde_json::Value),
}

/// Why a generator output could not be turned into a [`Plan`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub message: String,
}

impl ParseFailure {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ParseFailure {}

/// A problem instance bundled with its evaluator.
///
/// Implementations must be pure: `evaluate` may be called concurrently from
/// several conversations.
pub trait Task: Send + Sync {
    fn kind(&self) -> TaskKind;

    /// Prompt pieces for this instance, with the task description filled in.
    fn prompt_template(&self) -> PromptTemplate;

    fn parse(&self, raw: &str) -> Result<Plan, ParseFailure>;

    fn evaluate(&self, plan: &Plan) -> EvaluationResult;

    /// Result reported for output that does not parse at all.
    fn format_failure(&self, failure: &ParseFailure) -> EvaluationResult;

    fn evaluate_raw(&self, raw: &str) -> EvaluationResult {
        match self.parse(raw) {
            Ok(plan) => self.evaluate(&plan),
            Err(failure) => self.format_failure(&failure),
        }
    }
}

/// Result used when a plan variant does not belong to the task at hand.
pub(crate) fn wrong_plan_kind(expected: TaskKind, penalty: f64, offset: f64) -> EvaluationResult {
    EvaluationResult {
        score: -penalty,
        normalized: -penalty - offset,
        feedback: vec![format!("The plan is not a {expected} plan.")],
        notes: Vec::new(),
        valid: false,
        solved: false,
    }
}
