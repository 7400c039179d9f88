//! Reference strategies sharing the turn driver, prompts and evaluators
//! with the evolutionary search: a single pass, independent sampling and
//! independent long refinement chains.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::candidate::{Birth, Candidate, CandidateId};
use crate::conversation::{TurnDriver, TurnOutcome};
use crate::error::{Error, Result};
use crate::eval::Task;
use crate::hyper::Hyperparameters;
use crate::llm::prompt::PromptMode;
use crate::llm::Generator;
use crate::search::{parallel_map, run_search, Recorder, SearchOptions, SearchOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "one-pass")]
    OnePass,
    #[serde(rename = "best-of-n")]
    BestOfN,
    #[serde(rename = "seq-rev+")]
    SeqRevPlus,
    #[serde(rename = "mind-evolution")]
    Evolution,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::OnePass,
        Strategy::BestOfN,
        Strategy::SeqRevPlus,
        Strategy::Evolution,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::OnePass => "one-pass",
            Strategy::BestOfN => "best-of-n",
            Strategy::SeqRevPlus => "seq-rev+",
            Strategy::Evolution => "mind-evolution",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .or(match s {
                "evolution" => Some(Strategy::Evolution),
                "seq-rev" | "sequential-revision+" => Some(Strategy::SeqRevPlus),
                _ => None,
            })
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Budgets of the baselines. Defaults match the evolutionary budget of 800.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineBudget {
    pub best_of_n: usize,
    pub seq_threads: usize,
    pub seq_turns: usize,
}

impl Default for BaselineBudget {
    fn default() -> Self {
        Self {
            best_of_n: 800,
            seq_threads: 10,
            seq_turns: 80,
        }
    }
}

fn driver<'a>(task: &'a dyn Task, generator: &'a Generator, hyper: &Hyperparameters, options: &SearchOptions) -> TurnDriver<'a> {
    TurnDriver::new(task, generator, hyper.n_retries, hyper.ablation, options.run_id.clone())
}

fn absorb(recorder: &mut Recorder, outcome: TurnOutcome) -> Option<Candidate> {
    match outcome {
        TurnOutcome::Child(child) => {
            recorder.child(&child, false);
            Some(child.candidate)
        }
        TurnOutcome::Failed { usage } => {
            recorder.usage(usage);
            recorder.failed_turns(1);
            None
        }
        TurnOutcome::Stopped { usage } => {
            recorder.usage(usage);
            None
        }
        TurnOutcome::Fatal { error, usage } => {
            recorder.usage(usage);
            recorder.halt(error);
            None
        }
    }
}

fn fresh(conversation: usize, turn: usize) -> Birth {
    Birth {
        generation: 1,
        island: 1,
        conversation,
        turn,
    }
}

/// A single proposal, retried only on parse failure.
pub fn run_one_pass(task: &dyn Task, generator: &Generator, hyper: &Hyperparameters, options: &SearchOptions) -> SearchOutcome {
    let driver = driver(task, generator, hyper, options);
    let mut recorder = Recorder::default();
    absorb(&mut recorder, driver.turn(&[], PromptMode::Recombine, fresh(1, 1), CandidateId(1)));
    recorder.finish(1)
}

/// Independent proposals until one solves or `n_max` were made. Every
/// evaluated proposal counts (there is no population to deduplicate).
pub fn run_best_of_n(
    task: &dyn Task,
    generator: &Generator,
    hyper: &Hyperparameters,
    n_max: usize,
    options: &SearchOptions,
) -> SearchOutcome {
    let driver = driver(task, generator, hyper, options);
    let mut recorder = Recorder::default();
    let batch = options.parallelism.max(1);
    let mut next = 1;
    while next <= n_max && !driver.stopped() {
        let end = (next + batch - 1).min(n_max);
        let outcomes = parallel_map((next..=end).collect(), batch, |k| {
            driver.turn(&[], PromptMode::Recombine, fresh(k, 1), CandidateId(k as u64))
        });
        for outcome in outcomes {
            absorb(&mut recorder, outcome);
        }
        next = end + 1;
    }
    recorder.finish(1)
}

/// `threads` independent refinement chains of `turns` turns each, advanced
/// round-robin so the interleaving is fixed. A thread whose opening turn
/// failed opens again on its next round.
pub fn run_sequential_revision(
    task: &dyn Task,
    generator: &Generator,
    hyper: &Hyperparameters,
    threads: usize,
    turns: usize,
    options: &SearchOptions,
) -> SearchOutcome {
    let driver = driver(task, generator, hyper, options);
    let mut recorder = Recorder::default();
    let mut last: Vec<Option<Candidate>> = vec![None; threads];
    'rounds: for t in 1..=turns {
        let outcomes = parallel_map((0..threads).collect(), options.parallelism, |th| {
            let id = CandidateId((th * turns + t) as u64);
            match &last[th] {
                Some(prev) => driver.turn(&[prev], PromptMode::Refine, fresh(th + 1, t), id),
                None => driver.turn(&[], PromptMode::Recombine, fresh(th + 1, t), id),
            }
        });
        for (th, outcome) in outcomes.into_iter().enumerate() {
            if let Some(child) = absorb(&mut recorder, outcome) {
                last[th] = Some(child);
            }
        }
        if driver.stopped() || recorder.is_halted() {
            break 'rounds;
        }
    }
    recorder.finish(1)
}

/// Dispatches to the named strategy.
pub fn run_strategy(
    strategy: Strategy,
    task: &dyn Task,
    generator: &Generator,
    hyper: &Hyperparameters,
    budget: &BaselineBudget,
    options: &SearchOptions,
) -> Result<SearchOutcome> {
    Ok(match strategy {
        Strategy::OnePass => run_one_pass(task, generator, hyper, options),
        Strategy::BestOfN => run_best_of_n(task, generator, hyper, budget.best_of_n, options),
        Strategy::SeqRevPlus => {
            run_sequential_revision(task, generator, hyper, budget.seq_threads, budget.seq_turns, options)
        }
        Strategy::Evolution => run_search(task, generator, hyper, options)?,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::llm::scripted::ScriptedBackend;
    use crate::tasks::Problem;

    const SOLVING: &str = "<solution>Frankfurt (Day 1-3)\nMadrid (Day 3-7)\nSantorini (Day 7-12)\nZurich (Day 12-14)\nRiga (Day 14-16)</solution>";

    fn trip() -> Problem {
        serde_json::from_str(include_str!("../tests/fixtures/five_city_trip.json")).unwrap()
    }

    fn unsolved(k: usize) -> String {
        format!("<solution>Madrid (Day 1-{})</solution>", k + 1)
    }

    fn opts() -> SearchOptions {
        SearchOptions::default()
    }

    #[test]
    fn strategy_names_roundtrip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.as_str()));
        }
        assert!("greedy".parse::<Strategy>().is_err());
    }

    #[test]
    fn one_pass_solving_reply_takes_one_call() {
        let p = trip();
        let generator = Generator::new(Arc::new(ScriptedBackend::new([SOLVING])));
        let out = run_one_pass(p.task().as_ref(), &generator, &Hyperparameters::default(), &opts());
        assert!(out.solved);
        assert_eq!(out.llm_calls, 1);
        assert_eq!(generator.calls(), 1);
    }

    #[test]
    fn one_pass_garbage_burns_all_retries() {
        let p = trip();
        let generator = Generator::new(Arc::new(ScriptedBackend::new(vec!["garbage"; 10])));
        let out = run_one_pass(p.task().as_ref(), &generator, &Hyperparameters::default(), &opts());
        assert!(!out.solved && out.empty_run);
        assert_eq!(out.llm_calls, 5);
        assert_eq!(out.usage.len(), generator.calls());
    }

    #[test]
    fn best_of_n_stops_at_the_first_solve() {
        let p = trip();
        let mut replies: Vec<String> = (0..4).map(unsolved).collect();
        replies.push(SOLVING.into());
        replies.push(unsolved(9));
        let generator = Generator::new(Arc::new(ScriptedBackend::new(replies)));
        let out = run_best_of_n(p.task().as_ref(), &generator, &Hyperparameters::default(), 800, &opts());
        assert!(out.solved);
        assert_eq!(out.candidates_generated, 5);
        assert_eq!(out.best.unwrap().id, CandidateId(5));
    }

    #[test]
    fn best_of_n_never_solving_uses_the_full_budget() {
        let p = trip();
        let generator = Generator::new(Arc::new(ScriptedBackend::new(vec![unsolved(3); 800])));
        let out = run_best_of_n(p.task().as_ref(), &generator, &Hyperparameters::default(), 800, &opts());
        assert_eq!(out.candidates_generated, 800);
        assert!(!out.solved);
        let best: Vec<f64> = out.trace.iter().map(|t| t.best_score).collect();
        assert!(best.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sequential_chains_are_paths_and_interleaved() {
        let p = trip();
        let generator = Generator::new(Arc::new(ScriptedBackend::new((0..12).map(unsolved))));
        let out = run_sequential_revision(p.task().as_ref(), &generator, &Hyperparameters::default(), 3, 4, &opts());
        assert_eq!(out.candidates_generated, 12);
        let births: Vec<(usize, usize)> = out.transcript.iter().map(|r| (r.birth.conversation, r.birth.turn)).collect();
        assert_eq!(&births[..4], &[(1, 1), (2, 1), (3, 1), (1, 2)]);
        for r in &out.transcript {
            if r.birth.turn == 1 {
                assert!(r.lineage.is_empty());
            } else {
                let parent = out.transcript.iter().find(|q| q.id == r.lineage[0]).unwrap();
                assert_eq!(r.lineage.len(), 1);
                assert_eq!(parent.birth.conversation, r.birth.conversation);
                assert_eq!(parent.birth.turn + 1, r.birth.turn);
            }
        }
    }

    #[test]
    fn sequential_budget_caps_at_threads_times_turns() {
        let p = trip();
        let generator = Generator::new(Arc::new(ScriptedBackend::new((0..900).map(unsolved))));
        let out = run_sequential_revision(p.task().as_ref(), &generator, &Hyperparameters::default(), 10, 80, &opts());
        assert_eq!(out.candidates_generated, 800);
        assert_eq!(generator.calls(), 800);
    }

    #[test]
    fn a_solve_mid_chain_halts_every_chain() {
        let p = trip();
        let mut replies: Vec<String> = (0..7).map(unsolved).collect();
        replies.push(SOLVING.into());
        replies.extend((0..20).map(unsolved));
        let generator = Generator::new(Arc::new(ScriptedBackend::new(replies)));
        let out = run_sequential_revision(p.task().as_ref(), &generator, &Hyperparameters::default(), 3, 10, &opts());
        assert!(out.solved);
        assert_eq!(out.candidates_generated, 8);
        assert_eq!(generator.calls(), 8);
    }
}
