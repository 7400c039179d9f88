//! The refinement-through-critical-conversation turn driver shared by the
//! evolutionary search and the baselines.
//!
//! One turn is one generator call (plus parse retries): the prompt carries
//! the candidates with their evaluations, the critic instructions and the
//! author instructions, and the reply's solution is parsed and evaluated.

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::candidate::{Birth, Candidate, CandidateId};
use crate::eval::Task;
use crate::hyper::Ablation;
use crate::llm::prompt::{build_prompt, ParentView, PromptMode, PromptTemplate};
use crate::llm::{generate_parsed, BackendError, Generator, Purpose, RequestTag, UsageRecord};
use crate::tasks::blocks::solution_text;

/// Everything a turn needs besides its inputs. Cheap to share across
/// threads.
pub struct TurnDriver<'a> {
    pub task: &'a dyn Task,
    pub template: PromptTemplate,
    pub generator: &'a Generator,
    pub n_retries: usize,
    pub ablation: Ablation,
    pub run_id: String,
    /// Raised once any evaluation reports a solve; no calls are made after.
    pub stop: AtomicBool,
}

/// A candidate plus the usage of the calls that produced it.
#[derive(Debug, Clone)]
pub struct Child {
    pub candidate: Candidate,
    pub usage: Vec<UsageRecord>,
}

#[derive(Debug)]
pub enum TurnOutcome {
    Child(Child),
    /// Every attempt was unparseable (or the backend refused).
    Failed { usage: Vec<UsageRecord> },
    /// The stop flag was raised before the first call.
    Stopped { usage: Vec<UsageRecord> },
    Fatal { error: BackendError, usage: Vec<UsageRecord> },
}

/// Children of one conversation in turn order.
#[derive(Debug, Default)]
pub struct ConversationOutcome {
    pub children: Vec<Child>,
    pub failed_turns: usize,
    /// Usage of turns that produced no child.
    pub wasted_usage: Vec<UsageRecord>,
    pub fatal: Option<BackendError>,
}

/// Line-per-candidate log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub id: CandidateId,
    pub birth: Birth,
    pub lineage: Vec<CandidateId>,
    pub score: f64,
    pub normalized: f64,
    pub valid: bool,
    pub solved: bool,
    /// True when an identical text was already on the island.
    pub duplicate: bool,
    pub feedback: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub llm_calls: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub raw_text: String,
}

impl TranscriptRecord {
    pub fn new(child: &Child, duplicate: bool) -> Self {
        let c = &child.candidate;
        Self {
            id: c.id,
            birth: c.birth,
            lineage: c.lineage.clone(),
            score: c.evaluation.score,
            normalized: c.evaluation.normalized,
            valid: c.evaluation.valid,
            solved: c.evaluation.solved,
            duplicate,
            feedback: c.evaluation.feedback.clone(),
            notes: c.evaluation.notes.clone(),
            llm_calls: child.usage.len(),
            input_tokens: child.usage.iter().map(|u| u.input_tokens).sum(),
            output_tokens: child.usage.iter().map(|u| u.output_tokens).sum(),
            raw_text: c.raw_text.clone(),
        }
    }
}

impl<'a> TurnDriver<'a> {
    pub fn new(
        task: &'a dyn Task,
        generator: &'a Generator,
        n_retries: usize,
        ablation: Ablation,
        run_id: impl Into<String>,
    ) -> Self {
        Self {
            task,
            template: task.prompt_template(),
            generator,
            n_retries,
            ablation,
            run_id: run_id.into(),
            stop: AtomicBool::new(false),
        }
    }

    pub fn stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    pub fn halt(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    /// One proposal turn conditioned on `shown` (empty for a fresh start).
    pub fn turn(&self, shown: &[&Candidate], mode: PromptMode, birth: Birth, id: CandidateId) -> TurnOutcome {
        if self.stopped() {
            return TurnOutcome::Stopped { usage: Vec::new() };
        }
        let views: Vec<ParentView<'_>> = shown
            .iter()
            .map(|c| ParentView {
                text: solution_text(&c.raw_text),
                evaluation: &c.evaluation,
            })
            .collect();
        let prompt = build_prompt(&self.template, &views, mode, &self.ablation);
        let tag = RequestTag {
            run_id: self.run_id.clone(),
            birth,
            attempt: 1,
            purpose: Purpose::Propose,
        };
        let attempts = generate_parsed(
            self.generator,
            &prompt,
            tag,
            self.n_retries,
            || self.stopped(),
            |text| self.task.parse(text),
        );
        if let Some(error) = attempts.fatal {
            self.halt();
            return TurnOutcome::Fatal {
                error,
                usage: attempts.usage,
            };
        }
        let Some((raw_text, plan)) = attempts.accepted else {
            return if attempts.usage.is_empty() {
                TurnOutcome::Stopped { usage: attempts.usage }
            } else {
                TurnOutcome::Failed { usage: attempts.usage }
            };
        };
        let evaluation = self.task.evaluate(&plan);
        if evaluation.solved {
            self.halt();
        }
        TurnOutcome::Child(Child {
            candidate: Candidate {
                id,
                raw_text,
                parsed: Ok(plan),
                evaluation,
                lineage: shown.iter().map(|c| c.id).collect(),
                birth,
            },
            usage: attempts.usage,
        })
    }

    /// A chain of `n_seq` turns. Turn 1 recombines `parents` (or starts
    /// fresh); later turns refine the last good child. If turn 1 fails the
    /// conversation yields nothing; a later failed turn is skipped.
    pub fn conversation(
        &self,
        parents: &[Candidate],
        n_seq: usize,
        birth: Birth,
        id_of_turn: impl Fn(usize) -> CandidateId,
    ) -> ConversationOutcome {
        let mut out = ConversationOutcome::default();
        for turn in 1..=n_seq {
            let birth = Birth { turn, ..birth };
            let last = out.children.last().map(|c| &c.candidate);
            let (shown, mode): (Vec<&Candidate>, PromptMode) = match last {
                Some(prev) => (vec![prev], PromptMode::Refine),
                None => (parents.iter().collect(), PromptMode::Recombine),
            };
            match self.turn(&shown, mode, birth, id_of_turn(turn)) {
                TurnOutcome::Child(child) => out.children.push(child),
                TurnOutcome::Failed { usage } => {
                    out.failed_turns += 1;
                    out.wasted_usage.extend(usage);
                    if out.children.is_empty() {
                        break;
                    }
                }
                TurnOutcome::Stopped { usage } => {
                    out.wasted_usage.extend(usage);
                    break;
                }
                TurnOutcome::Fatal { error, usage } => {
                    out.wasted_usage.extend(usage);
                    out.fatal = Some(error);
                    break;
                }
            }
            if self.stopped() {
                break;
            }
        }
        out
    }
}
