//! Island-model genetic search over natural-language plans.
//!
//! Candidates are plain text produced by a pluggable text generator
//! ([`llm::Backend`]). Each candidate is parsed and scored by a task
//! evaluator ([`eval::Task`]) that also emits textual feedback, which is fed
//! back into the next round of prompts. The crate ships three evaluators
//! (trip itineraries, meeting schedules, hidden-message poems), seeded
//! instance generators with brute-force oracles, the three reference
//! baselines and an experiment harness with token and cost accounting.

pub mod baselines;
pub mod candidate;
pub mod conversation;
pub mod error;
pub mod eval;
pub mod gen;
pub mod harness;
pub mod hyper;
pub mod llm;
pub mod search;
pub mod select;
pub mod seed;
pub mod tasks;

pub use candidate::{Birth, Candidate, CandidateId, Island};
pub use error::{Error, Result};
pub use eval::{EvaluationResult, ParseFailure, Plan, Task, TaskKind};
pub use hyper::{Ablation, HyperOverrides, Hyperparameters};
pub use search::{run_search, SearchOutcome};
