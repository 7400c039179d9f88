//! Offline backend that imitates an LLM with task-aware random edits.
//!
//! A proposal request is answered by recovering the candidate solutions
//! shown in the prompt, taking the best-scored one as the base and applying
//! one or two random edits through the instance's [`MutationKernel`]. With no
//! candidates in the prompt it samples a fresh solution. Reset-selection
//! requests are answered with the first `n_top` entries.
//!
//! Replies are a pure function of the backend seed and the request tag, so
//! runs are reproducible regardless of thread scheduling.

mod meeting;
mod steg;
mod trip;

use std::sync::Arc;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use super::prompt::{extract_candidates, SOLUTION_CLOSE, SOLUTION_OPEN};
use super::{estimate_tokens, Backend, BackendError, GenerationRequest, GenerationResponse, Purpose, UsageRecord};
use crate::seed;
use crate::tasks::Problem;

pub use meeting::MeetingKernel;
pub use steg::StegKernel;
pub use trip::TripKernel;

/// Task-specific solution generator.
pub trait MutationKernel: Send + Sync {
    /// A fresh solution body with no parent to go on.
    fn sample(&self, rng: &mut dyn RngCore) -> String;

    /// A variation of `parents`, which are ordered best first.
    fn mutate(&self, parents: &[&str], rng: &mut dyn RngCore) -> String;
}

pub fn kernel_for(problem: &Problem) -> Arc<dyn MutationKernel> {
    match problem {
        Problem::Trip(p) => Arc::new(TripKernel::new(p.clone())),
        Problem::Meeting(p) => Arc::new(MeetingKernel::new(p.clone())),
        Problem::Steg(p) => Arc::new(StegKernel::new(p.clone())),
    }
}

pub struct SyntheticBackend {
    model: String,
    kernel: Arc<dyn MutationKernel>,
    seed: u64,
}

impl SyntheticBackend {
    pub fn new(kernel: Arc<dyn MutationKernel>, seed: u64) -> Self {
        Self {
            model: "gemini-1.5-flash".to_owned(),
            kernel,
            seed,
        }
    }

    pub fn for_problem(problem: &Problem, seed: u64) -> Self {
        Self::new(kernel_for(problem), seed)
    }

    pub fn with_model(mut self, model: &str) -> Self {
        self.model = model.to_owned();
        self
    }

    fn rng(&self, request: &GenerationRequest) -> ChaCha8Rng {
        let tag = &request.tag;
        let base = seed::derive_str(self.seed, &tag.run_id);
        let purpose = match tag.purpose {
            Purpose::Propose => 0,
            Purpose::ResetSelection => 1,
        };
        let b = tag.birth;
        seed::rng(
            base,
            &[
                purpose,
                b.generation as u64,
                b.island as u64,
                b.conversation as u64,
                b.turn as u64,
                tag.attempt as u64,
            ],
        )
    }
}

/// The `n` in "Choose n of these solutions", if present.
fn requested_count(prompt: &str) -> Option<usize> {
    let rest = &prompt[prompt.rfind("Choose ")? + "Choose ".len()..];
    rest.split_whitespace().next()?.parse().ok()
}

impl Backend for SyntheticBackend {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let mut rng = self.rng(request);
        let text = match request.tag.purpose {
            Purpose::ResetSelection => {
                let n = requested_count(&request.prompt).unwrap_or(1).max(1);
                let picks: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
                format!("Selected: {}", picks.join(", "))
            }
            Purpose::Propose => {
                let mut shown = extract_candidates(&request.prompt);
                // stable: equal scores keep prompt order
                shown.sort_by(|a, b| {
                    let (a, b) = (a.score.unwrap_or(f64::NEG_INFINITY), b.score.unwrap_or(f64::NEG_INFINITY));
                    b.partial_cmp(&a).unwrap_or(std::cmp::Ordering::Equal)
                });
                let body = if shown.is_empty() {
                    self.kernel.sample(&mut rng)
                } else {
                    let parents: Vec<&str> = shown.iter().map(|c| c.text.as_str()).collect();
                    self.kernel.mutate(&parents, &mut rng)
                };
                format!("{SOLUTION_OPEN}\n{body}\n{SOLUTION_CLOSE}")
            }
        };
        Ok(GenerationResponse {
            usage: UsageRecord::new(estimate_tokens(&request.prompt), estimate_tokens(&text), &self.model),
            text,
        })
    }
}
