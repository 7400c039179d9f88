//! The island-model evolutionary search loop.
//!
//! Island 1 starts from scratch (its first conversations have no parents),
//! the other islands start empty and are seeded by migration. Each
//! generation processes islands in index order; after an island's
//! conversations finish, its best candidates are cloned to the next island.
//! Every `n_reset_interval` generations (but never after the last one) the
//! islands with the lowest mean score are replaced by global elites.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::candidate::{by_rank, Birth, Candidate, CandidateId, Island};
use crate::conversation::{Child, TranscriptRecord, TurnDriver};
use crate::error::Result;
use crate::eval::Task;
use crate::hyper::Hyperparameters;
use crate::llm::prompt::{build_reset_prompt, parse_reset_selection, ParentView};
use crate::llm::{generate_parsed, Generator, Purpose, RequestTag, UsageRecord};
use crate::select::select_parents;
use crate::seed;
use crate::tasks::blocks::solution_text;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Label carried in every request tag.
    pub run_id: String,
    pub seed: u64,
    /// Conversations of one island generation that may run concurrently.
    pub parallelism: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            run_id: "run".to_owned(),
            seed: 0,
            parallelism: 1,
        }
    }
}

/// Running totals after one evaluated candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Candidates counted against the budget so far.
    pub candidates: usize,
    pub llm_calls: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub best_score: f64,
    pub best_normalized: f64,
    pub solved: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchOutcome {
    pub best: Option<Candidate>,
    pub solved: bool,
    /// True when not a single candidate was evaluated.
    pub empty_run: bool,
    /// Unique children stored (duplicates are evaluated but not counted).
    pub candidates_generated: usize,
    pub candidates_evaluated: usize,
    pub duplicates: usize,
    /// Turns that exhausted their retries without a parseable reply.
    pub failed_turns: usize,
    pub llm_calls: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(skip)]
    pub usage: Vec<UsageRecord>,
    pub generations_completed: usize,
    /// Why the run stopped early on a backend failure, if it did.
    pub halted: Option<String>,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
    #[serde(skip)]
    pub transcript: Vec<TranscriptRecord>,
}

impl SearchOutcome {
    pub fn best_score(&self) -> Option<f64> {
        self.best.as_ref().map(Candidate::score)
    }

    pub fn best_normalized(&self) -> Option<f64> {
        self.best.as_ref().map(|c| c.evaluation.normalized)
    }
}

/// Accumulates the outcome of any strategy in merge order, so totals do not
/// depend on thread timing.
#[derive(Debug, Default)]
pub(crate) struct Recorder {
    best: Option<Candidate>,
    generated: usize,
    evaluated: usize,
    duplicates: usize,
    failed_turns: usize,
    usage: Vec<UsageRecord>,
    input_tokens: u64,
    output_tokens: u64,
    trace: Vec<TracePoint>,
    transcript: Vec<TranscriptRecord>,
    halted: Option<String>,
}

impl Recorder {
    pub(crate) fn usage(&mut self, records: impl IntoIterator<Item = UsageRecord>) {
        for r in records {
            self.input_tokens += r.input_tokens;
            self.output_tokens += r.output_tokens;
            self.usage.push(r);
        }
    }

    pub(crate) fn failed_turns(&mut self, n: usize) {
        self.failed_turns += n;
    }

    pub(crate) fn halt(&mut self, reason: impl ToString) {
        self.halted.get_or_insert_with(|| reason.to_string());
    }

    pub(crate) fn is_halted(&self) -> bool {
        self.halted.is_some()
    }

    /// Records one evaluated child. `duplicate` children are logged but not
    /// counted against the budget.
    pub(crate) fn child(&mut self, child: &Child, duplicate: bool) {
        self.usage(child.usage.iter().cloned());
        self.evaluated += 1;
        if duplicate {
            self.duplicates += 1;
        } else {
            self.generated += 1;
        }
        let c = &child.candidate;
        let better = self
            .best
            .as_ref()
            .is_none_or(|b| c.score() > b.score() || (c.solved() && !b.solved()));
        if better {
            self.best = Some(c.clone());
        }
        let best = self.best.as_ref().expect("best set above");
        self.trace.push(TracePoint {
            candidates: self.generated,
            llm_calls: self.usage.len(),
            input_tokens: self.input_tokens,
            output_tokens: self.output_tokens,
            best_score: best.score(),
            best_normalized: best.evaluation.normalized,
            solved: best.solved(),
        });
        self.transcript.push(TranscriptRecord::new(child, duplicate));
    }

    pub(crate) fn finish(self, generations_completed: usize) -> SearchOutcome {
        SearchOutcome {
            solved: self.best.as_ref().is_some_and(Candidate::solved),
            empty_run: self.evaluated == 0,
            best: self.best,
            candidates_generated: self.generated,
            candidates_evaluated: self.evaluated,
            duplicates: self.duplicates,
            failed_turns: self.failed_turns,
            llm_calls: self.usage.len(),
            input_tokens: self.input_tokens,
            output_tokens: self.output_tokens,
            usage: self.usage,
            generations_completed,
            halted: self.halted,
            trace: self.trace,
            transcript: self.transcript,
        }
    }
}

/// Maps `f` over `items` with up to `parallelism` worker threads, returning
/// results in input order.
pub(crate) fn parallel_map<T, R, F>(items: Vec<T>, parallelism: usize, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let workers = parallelism.max(1).min(items.len());
    if workers <= 1 {
        return items.into_iter().map(f).collect();
    }
    let n = items.len();
    let jobs: Vec<Mutex<Option<T>>> = items.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let results: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let job = jobs[i].lock().expect("job slot poisoned").take().expect("job taken once");
                let out = f(job);
                *results[i].lock().expect("result slot poisoned") = Some(out);
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.into_inner().expect("result slot poisoned").expect("every job ran"))
        .collect()
}

/// Candidate id for a birth inside the budget grid: ids enumerate
/// (generation, island, conversation, turn) in row-major order from 1.
pub fn grid_id(hyper: &Hyperparameters, birth: Birth) -> CandidateId {
    let per_island = (hyper.n_convs * hyper.n_seq) as u64;
    let island_row = ((birth.generation - 1) * hyper.n_island + (birth.island - 1)) as u64;
    let within = ((birth.conversation - 1) * hyper.n_seq + (birth.turn - 1)) as u64;
    CandidateId(island_row * per_island + within + 1)
}

/// Clones the top `n_emigrate` of island `from` (0-based position) to the
/// next island, wrapping around. Returns how many arrivals were stored.
pub fn migrate(islands: &mut [Island], from: usize, n_emigrate: usize) -> usize {
    if islands.len() < 2 {
        return 0;
    }
    let emigrants = islands[from].top(n_emigrate);
    let to = (from + 1) % islands.len();
    let dest = &mut islands[to];
    emigrants.into_iter().filter(|c| dest.insert(c.clone())).count()
}

/// 0-based positions of the `n_reset` islands with the lowest mean score,
/// lowest first. Empty islands rank below every populated one; ties go to
/// the later island.
pub fn islands_to_reset(islands: &[Island], n_reset: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..islands.len()).collect();
    order.sort_by(|&a, &b| {
        islands[a]
            .reset_rank_score()
            .total_cmp(&islands[b].reset_rank_score())
            .then(b.cmp(&a))
    });
    order.truncate(n_reset);
    order
}

/// Global top `n` candidates across all islands, one per distinct text.
pub fn elite_pool(islands: &[Island], n: usize) -> Vec<Candidate> {
    let mut all: Vec<&Candidate> = islands.iter().flat_map(|i| i.population()).collect();
    all.sort_by(|a, b| by_rank(a, b));
    let mut seen = std::collections::HashSet::new();
    all.into_iter()
        .filter(|c| seen.insert(c.raw_text.trim().to_owned()))
        .take(n)
        .cloned()
        .collect()
}

/// Resolves the elites from `pool` (best first). `picks` are 1-based pool
/// positions chosen by the generator; if fewer than `n_top` are usable the
/// rest is filled from the top of the pool.
pub fn choose_elites(pool: &[Candidate], picks: Option<&[usize]>, n_top: usize) -> Vec<Candidate> {
    let mut chosen: Vec<usize> = Vec::new();
    for &p in picks.unwrap_or_default() {
        if (1..=pool.len()).contains(&p) && !chosen.contains(&(p - 1)) && chosen.len() < n_top {
            chosen.push(p - 1);
        }
    }
    for i in 0..pool.len() {
        if chosen.len() >= n_top {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    chosen.into_iter().map(|i| pool[i].clone()).collect()
}

/// Replaces the populations at `targets` with clones of `elites`.
pub fn reset_islands(islands: &mut [Island], targets: &[usize], elites: &[Candidate]) {
    for &t in targets {
        islands[t].replace_with(elites.to_vec());
    }
}

/// Asks the generator to pick diverse elites out of `pool`. Returns the
/// 1-based picks, or `None` on any failure.
fn llm_picks(
    driver: &TurnDriver<'_>,
    pool: &[Candidate],
    n_top: usize,
    generation: usize,
    recorder: &mut Recorder,
) -> Option<Vec<usize>> {
    let views: Vec<ParentView<'_>> = pool
        .iter()
        .map(|c| ParentView {
            text: solution_text(&c.raw_text),
            evaluation: &c.evaluation,
        })
        .collect();
    let prompt = build_reset_prompt(&driver.template, &views, n_top, &driver.ablation);
    let tag = RequestTag {
        run_id: driver.run_id.clone(),
        birth: Birth {
            generation,
            island: 0,
            conversation: 0,
            turn: 0,
        },
        attempt: 1,
        purpose: Purpose::ResetSelection,
    };
    let attempts = generate_parsed(
        driver.generator,
        &prompt,
        tag,
        driver.n_retries,
        || driver.stopped(),
        |reply| parse_reset_selection(reply, pool.len(), n_top).ok_or(()),
    );
    recorder.usage(attempts.usage);
    if let Some(err) = attempts.fatal {
        driver.halt();
        recorder.halt(err);
        return None;
    }
    match attempts.accepted {
        Some((_, picks)) => Some(picks),
        None => {
            log::info!("reset selection unusable in generation {generation}; using top candidates");
            None
        }
    }
}

/// Runs the evolutionary search on one task instance.
pub fn run_search(
    task: &dyn Task,
    generator: &Generator,
    hyper: &Hyperparameters,
    options: &SearchOptions,
) -> Result<SearchOutcome> {
    hyper.validate()?;
    let driver = TurnDriver::new(task, generator, hyper.n_retries, hyper.ablation, options.run_id.clone());
    let mut islands: Vec<Island> = (1..=hyper.n_island).map(Island::new).collect();
    let mut recorder = Recorder::default();
    let mut completed = 0;

    'generations: for g in 1..=hyper.n_gens {
        for i in 0..hyper.n_island {
            let snapshot = islands[i].population().to_vec();
            let jobs: Vec<(usize, Vec<Candidate>)> = (1..=hyper.n_convs)
                .map(|c| {
                    let mut rng = seed::rng(options.seed, &[g as u64, (i + 1) as u64, c as u64]);
                    (c, select_parents(&snapshot, hyper, &mut rng))
                })
                .collect();
            let outcomes = parallel_map(jobs, options.parallelism, |(c, parents)| {
                let birth = Birth {
                    generation: g,
                    island: i + 1,
                    conversation: c,
                    turn: 1,
                };
                driver.conversation(&parents, hyper.n_seq, birth, |turn| {
                    grid_id(hyper, Birth { turn, ..birth })
                })
            });
            for out in outcomes {
                for child in &out.children {
                    let stored = islands[i].insert(child.candidate.clone());
                    recorder.child(child, !stored);
                }
                recorder.failed_turns(out.failed_turns);
                recorder.usage(out.wasted_usage);
                if let Some(err) = out.fatal {
                    recorder.halt(err);
                }
            }
            if driver.stopped() || recorder.is_halted() {
                break 'generations;
            }
            migrate(&mut islands, i, hyper.n_emigrate);
        }
        if g % hyper.n_reset_interval == 0 && g < hyper.n_gens {
            let pool = elite_pool(&islands, hyper.n_candidate);
            let picks = if hyper.ablation.reset_with_llm && pool.len() > hyper.n_top {
                llm_picks(&driver, &pool, hyper.n_top, g, &mut recorder)
            } else {
                None
            };
            if recorder.is_halted() {
                break 'generations;
            }
            let elites = choose_elites(&pool, picks.as_deref(), hyper.n_top);
            let targets = islands_to_reset(&islands, hyper.n_reset);
            reset_islands(&mut islands, &targets, &elites);
        }
        completed = g;
    }
    Ok(recorder.finish(completed))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::candidate::test_support::candidate;
    use crate::llm::scripted::ScriptedBackend;
    use crate::tasks::Problem;

    fn island(index: usize, scores: &[f64]) -> Island {
        let mut isl = Island::new(index);
        for (k, s) in scores.iter().enumerate() {
            isl.insert(candidate((index * 100 + k) as u64, &format!("i{index}-{k}"), *s));
        }
        isl
    }

    fn trip() -> Problem {
        serde_json::from_str(include_str!("../tests/fixtures/five_city_trip.json")).unwrap()
    }

    fn unsolved(k: usize) -> String {
        format!("<solution>Madrid (Day 1-{})</solution>", k + 1)
    }

    #[test]
    fn grid_ids_are_dense_and_unique() {
        let h = Hyperparameters::default();
        let mut ids = Vec::new();
        for generation in 1..=h.n_gens {
            for island in 1..=h.n_island {
                for conversation in 1..=h.n_convs {
                    for turn in 1..=h.n_seq {
                        ids.push(grid_id(&h, Birth { generation, island, conversation, turn }).0);
                    }
                }
            }
        }
        assert_eq!(ids, (1..=800).collect::<Vec<u64>>());
    }

    #[test]
    fn migration_wraps_and_clones() {
        let mut islands = vec![island(1, &[-1.0]), island(2, &[]), island(3, &[]), island(4, &[-2.0, -3.0])];
        assert_eq!(migrate(&mut islands, 3, 5), 2);
        assert_eq!(islands[3].len(), 2);
        assert_eq!(islands[0].len(), 3);
        // arrivals already present are not stored twice
        assert_eq!(migrate(&mut islands, 3, 5), 0);
        assert_eq!(islands[0].len(), 3);
    }

    #[test]
    fn single_island_never_migrates() {
        let mut islands = vec![island(1, &[-1.0])];
        assert_eq!(migrate(&mut islands, 0, 5), 0);
        assert_eq!(islands[0].len(), 1);
    }

    #[test]
    fn lowest_means_are_reset_and_empty_counts_lowest() {
        let islands = vec![island(1, &[0.0]), island(2, &[-1.0]), island(3, &[-5.0]), island(4, &[-9.0])];
        let mut t = islands_to_reset(&islands, 2);
        t.sort_unstable();
        assert_eq!(t, vec![2, 3]);
        let islands = vec![island(1, &[-9.0]), island(2, &[]), island(3, &[-1.0])];
        assert_eq!(islands_to_reset(&islands, 1), vec![1]);
    }

    #[test]
    fn elite_pool_truncates_and_dedups() {
        let mut a = island(1, &[-1.0, -2.0]);
        let b = island(2, &[-3.0]);
        a.insert(candidate(999, "i2-0", -3.0));
        let pool = elite_pool(&[a, b], 15);
        assert_eq!(pool.len(), 3);
        let scores: Vec<f64> = pool.iter().map(Candidate::score).collect();
        assert_eq!(scores, vec![-1.0, -2.0, -3.0]);
    }

    #[test]
    fn elites_fill_up_from_the_top() {
        let pool: Vec<Candidate> = (0..6).map(|k| candidate(k, &format!("t{k}"), -(k as f64))).collect();
        let ids = |v: Vec<Candidate>| v.iter().map(|c| c.id.0).collect::<Vec<_>>();
        assert_eq!(ids(choose_elites(&pool, None, 3)), vec![0, 1, 2]);
        assert_eq!(ids(choose_elites(&pool, Some(&[6, 4]), 3)), vec![5, 3, 0]);
        assert_eq!(ids(choose_elites(&pool, Some(&[9, 2, 2]), 2)), vec![1, 0]);
    }

    #[test]
    fn immediate_solve_short_circuits() {
        let p = trip();
        let task = p.task();
        let solving = "<solution>Frankfurt (Day 1-3)\nMadrid (Day 3-7)\nSantorini (Day 7-12)\nZurich (Day 12-14)\nRiga (Day 14-16)</solution>";
        let backend = Arc::new(ScriptedBackend::new([solving, "unused"]));
        let generator = Generator::new(backend.clone());
        let out = run_search(task.as_ref(), &generator, &Hyperparameters::default(), &SearchOptions::default()).unwrap();
        assert!(out.solved);
        assert_eq!(out.candidates_generated, 1);
        assert_eq!(out.llm_calls, 1);
        assert_eq!(out.generations_completed, 0);
        assert_eq!(backend.remaining(), 1);
    }

    #[test]
    fn island_one_initialization_fills_its_budget() {
        let p = trip();
        let task = p.task();
        let hyper = Hyperparameters {
            n_gens: 1,
            n_island: 1,
            n_reset: 1,
            ..Default::default()
        };
        let replies: Vec<String> = (0..20).map(unsolved).collect();
        let generator = Generator::new(Arc::new(ScriptedBackend::new(replies)));
        let out = run_search(task.as_ref(), &generator, &hyper, &SearchOptions::default()).unwrap();
        assert_eq!(out.candidates_generated, 20);
        assert_eq!(out.generations_completed, 1);
    }

    #[test]
    fn one_repeat_is_evaluated_but_not_stored() {
        let p = trip();
        let task = p.task();
        let hyper = Hyperparameters {
            n_gens: 1,
            n_island: 1,
            n_reset: 1,
            ..Default::default()
        };
        let mut replies: Vec<String> = (0..19).map(unsolved).collect();
        replies.insert(4, unsolved(0));
        let generator = Generator::new(Arc::new(ScriptedBackend::new(replies)));
        let out = run_search(task.as_ref(), &generator, &hyper, &SearchOptions::default()).unwrap();
        assert_eq!(out.candidates_evaluated, 20);
        assert_eq!(out.candidates_generated, 19);
        assert_eq!(out.duplicates, 1);
        assert!(out.transcript[4].duplicate);
    }

    #[test]
    fn chain_length_one_gives_one_candidate_per_conversation() {
        let p = trip();
        let task = p.task();
        let hyper = Hyperparameters {
            n_gens: 1,
            n_island: 1,
            n_reset: 1,
            n_seq: 1,
            ..Default::default()
        };
        let generator = Generator::new(Arc::new(ScriptedBackend::new((0..5).map(unsolved))));
        let out = run_search(task.as_ref(), &generator, &hyper, &SearchOptions::default()).unwrap();
        assert_eq!(out.candidates_generated, 5);
        assert!(out.transcript.iter().all(|r| r.birth.turn == 1));
    }

    #[test]
    fn exhausted_script_halts_with_a_message() {
        let p = trip();
        let task = p.task();
        let generator = Generator::new(Arc::new(ScriptedBackend::new((0..7).map(unsolved))));
        let out = run_search(task.as_ref(), &generator, &Hyperparameters::default(), &SearchOptions::default()).unwrap();
        assert_eq!(out.candidates_generated, 7);
        assert_eq!(out.halted.as_deref(), Some("script exhausted"));
        assert_eq!(out.generations_completed, 0);
        assert!(!out.empty_run);
    }

    #[test]
    fn unparseable_first_turns_give_an_empty_run() {
        let p = trip();
        let task = p.task();
        let hyper = Hyperparameters {
            n_gens: 1,
            n_island: 1,
            n_reset: 1,
            n_convs: 2,
            n_retries: 2,
            ..Default::default()
        };
        let generator = Generator::new(Arc::new(ScriptedBackend::new(["a", "b", "c", "d"])));
        let out = run_search(task.as_ref(), &generator, &hyper, &SearchOptions::default()).unwrap();
        assert!(out.empty_run && !out.solved && out.best.is_none());
        assert_eq!(out.failed_turns, 2);
        assert_eq!(out.llm_calls, 4);
    }

    #[test]
    fn parallel_pool_keeps_order() {
        let out = parallel_map((0..50).collect(), 8, |x: u32| x * 2);
        assert_eq!(out, (0..50).map(|x| x * 2).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn reset_targets_have_the_lowest_means(
            means in proptest::collection::vec(proptest::option::of(-20i32..0), 1..8),
            n_reset in 0usize..8,
        ) {
            let islands: Vec<Island> = means
                .iter()
                .enumerate()
                .map(|(k, m)| match m {
                    Some(m) => island(k + 1, &[f64::from(*m)]),
                    None => island(k + 1, &[]),
                })
                .collect();
            let n_reset = n_reset.min(islands.len());
            let targets = islands_to_reset(&islands, n_reset);
            prop_assert_eq!(targets.len(), n_reset);
            let key = |k: usize| islands[k].reset_rank_score();
            for t in &targets {
                for k in 0..islands.len() {
                    if !targets.contains(&k) {
                        prop_assert!(key(*t) <= key(k));
                    }
                }
            }
        }
    }
}
