//! Running a strategy over a corpus with streamed, resumable output.
//!
//! Output directory layout:
//! - `candidates.jsonl`: one line per evaluated candidate, tagged with the
//!   instance id and stage;
//! - `records.jsonl`: one line per finished (instance, stage) run;
//! - `report.json`: aggregates over `records.jsonl`.
//!
//! Lines are written in corpus order whatever the parallelism, so two runs
//! of a deterministic backend produce identical candidate logs. A rerun
//! skips (instance, stage) pairs that already have a record and drops
//! candidate lines of runs that never finished.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{BackendConfig, ExperimentConfig};
use super::report::{build_report, Report};
use crate::baselines::{run_strategy, Strategy};
use crate::conversation::TranscriptRecord;
use crate::error::{Error, Result};
use crate::gen::{load_corpus, Instance, Split};
use crate::hyper::Hyperparameters;
use crate::llm::{accumulate_cost, PriceTable};
use crate::search::{SearchOptions, SearchOutcome};
use crate::seed;

pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.json";

/// Best-so-far state once `candidates` candidates have been counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub candidates: usize,
    pub llm_calls: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: f64,
    pub best_normalized: f64,
    pub solved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: String,
    pub level: usize,
    pub split: Split,
    pub strategy: Strategy,
    /// 1 for the first pass, 2 for the escalation pass.
    pub stage: u8,
    pub model: String,
    pub solved: bool,
    pub score: Option<f64>,
    pub normalized: Option<f64>,
    pub empty_run: bool,
    pub candidates_generated: usize,
    pub candidates_evaluated: usize,
    pub duplicates: usize,
    pub failed_turns: usize,
    pub llm_calls: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: f64,
    pub generations_completed: usize,
    pub halted: Option<String>,
    /// Set when the run could not be carried out at all.
    pub error: Option<String>,
    /// Backend dependent; informational only.
    pub wall_time_ms: u64,
    pub curve: Vec<CurvePoint>,
}

#[derive(Serialize)]
struct CandidateLine<'a> {
    instance: &'a str,
    stage: u8,
    #[serde(flatten)]
    record: &'a TranscriptRecord,
}

#[derive(Deserialize)]
struct LineKey {
    instance: String,
    stage: u8,
}

/// Everything needed to run one stage over many instances.
struct StageRun<'a> {
    stage: u8,
    strategy: Strategy,
    hyper: Hyperparameters,
    backend: &'a BackendConfig,
    config: &'a ExperimentConfig,
    prices: &'a PriceTable,
}

fn curve(outcome: &SearchOutcome, price: impl Fn(u64, u64) -> f64) -> Vec<CurvePoint> {
    let mut points: Vec<CurvePoint> = Vec::new();
    for t in &outcome.trace {
        let point = CurvePoint {
            candidates: t.candidates,
            llm_calls: t.llm_calls,
            input_tokens: t.input_tokens,
            output_tokens: t.output_tokens,
            cost_usd: price(t.input_tokens, t.output_tokens),
            best_normalized: t.best_normalized,
            solved: t.solved,
        };
        match points.last_mut() {
            Some(last) if last.candidates == point.candidates => *last = point,
            _ => points.push(point),
        }
    }
    points
}

impl StageRun<'_> {
    fn instance_seed(&self, id: &str) -> u64 {
        let base = seed::derive_str(self.config.seed, id);
        if self.stage == 1 {
            base
        } else {
            seed::derive(base, &[u64::from(self.stage)])
        }
    }

    fn run(&self, instance: &Instance) -> (InstanceRecord, Vec<TranscriptRecord>) {
        let id = &instance.entry.id;
        let started = Instant::now();
        let mut record = InstanceRecord {
            id: id.clone(),
            level: instance.entry.level,
            split: instance.entry.split,
            strategy: self.strategy,
            stage: self.stage,
            model: String::new(),
            solved: false,
            score: None,
            normalized: None,
            empty_run: true,
            candidates_generated: 0,
            candidates_evaluated: 0,
            duplicates: 0,
            failed_turns: 0,
            llm_calls: 0,
            input_tokens: 0,
            output_tokens: 0,
            cost_usd: 0.0,
            generations_completed: 0,
            halted: None,
            error: None,
            wall_time_ms: 0,
            curve: Vec::new(),
        };
        match self.try_run(instance, &mut record) {
            Ok(transcript) => {
                record.wall_time_ms = started.elapsed().as_millis() as u64;
                (record, transcript)
            }
            Err(err) => {
                log::error!("{id} stage {}: {err}", self.stage);
                record.error = Some(err.to_string());
                record.wall_time_ms = started.elapsed().as_millis() as u64;
                (record, Vec::new())
            }
        }
    }

    fn try_run(&self, instance: &Instance, record: &mut InstanceRecord) -> Result<Vec<TranscriptRecord>> {
        let id = &instance.entry.id;
        let seed = self.instance_seed(id);
        let generator = self.backend.generator(&instance.problem, id, seed)?;
        record.model = generator.model_name().to_owned();
        let price = *self.prices.get(&record.model)?;
        let task = instance.problem.task();
        let options = SearchOptions {
            run_id: if self.stage == 1 { id.clone() } else { format!("{id}/stage{}", self.stage) },
            seed,
            parallelism: 1,
        };
        let outcome = run_strategy(
            self.strategy,
            task.as_ref(),
            &generator,
            &self.hyper,
            &self.config.baselines,
            &options,
        )?;
        let cost = accumulate_cost(&outcome.usage, self.prices)?;
        record.solved = outcome.solved;
        record.score = outcome.best_score();
        record.normalized = outcome.best_normalized();
        record.empty_run = outcome.empty_run;
        record.candidates_generated = outcome.candidates_generated;
        record.candidates_evaluated = outcome.candidates_evaluated;
        record.duplicates = outcome.duplicates;
        record.failed_turns = outcome.failed_turns;
        record.llm_calls = cost.llm_calls;
        record.input_tokens = cost.input_tokens;
        record.output_tokens = cost.output_tokens;
        record.cost_usd = cost.total_cost;
        record.generations_completed = outcome.generations_completed;
        record.halted = outcome.halted.clone();
        record.curve = curve(&outcome, |i, o| price.cost(i, o));
        Ok(outcome.transcript)
    }
}

/// Appends finished runs to the two line logs in submission order.
struct OrderedSink {
    next: usize,
    pending: BTreeMap<usize, (InstanceRecord, Vec<TranscriptRecord>)>,
    candidates: File,
    records: File,
    failure: Option<Error>,
}

impl OrderedSink {
    fn open(dir: &Path) -> Result<Self> {
        let open = |name: &str| {
            let path = dir.join(name);
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(path, e))
        };
        Ok(Self {
            next: 0,
            pending: BTreeMap::new(),
            candidates: open(CANDIDATES_FILE)?,
            records: open(RECORDS_FILE)?,
            failure: None,
        })
    }

    fn push(&mut self, index: usize, result: (InstanceRecord, Vec<TranscriptRecord>)) {
        self.pending.insert(index, result);
        while let Some((record, transcript)) = self.pending.remove(&self.next) {
            if let Err(e) = self.write(&record, &transcript) {
                self.failure.get_or_insert(e);
            }
            self.next += 1;
        }
    }

    fn write(&mut self, record: &InstanceRecord, transcript: &[TranscriptRecord]) -> Result<()> {
        let mut block = String::new();
        for t in transcript {
            block.push_str(&serde_json::to_string(&CandidateLine {
                instance: &record.id,
                stage: record.stage,
                record: t,
            })?);
            block.push('\n');
        }
        self.candidates
            .write_all(block.as_bytes())
            .and_then(|()| self.candidates.flush())
            .map_err(|e| Error::io(CANDIDATES_FILE, e))?;
        let line = serde_json::to_string(record)? + "\n";
        self.records
            .write_all(line.as_bytes())
            .and_then(|()| self.records.flush())
            .map_err(|e| Error::io(RECORDS_FILE, e))
    }
}

fn run_stage(run: &StageRun<'_>, jobs: &[&Instance], parallelism: usize) -> Result<()> {
    if jobs.is_empty() {
        return Ok(());
    }
    log::info!("stage {}: {} instance(s) with {}", run.stage, jobs.len(), run.strategy);
    let sink = Mutex::new(OrderedSink::open(&run.config.output_dir)?);
    let next = AtomicUsize::new(0);
    let workers = parallelism.clamp(1, jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let result = run.run(jobs[i]);
                log::info!(
                    "{} stage {}: solved={} candidates={}",
                    result.0.id,
                    run.stage,
                    result.0.solved,
                    result.0.candidates_generated
                );
                sink.lock().expect("sink poisoned").push(i, result);
            });
        }
    });
    match sink.into_inner().expect("sink poisoned").failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Reads every record line of an output directory.
pub fn read_records(dir: &Path) -> Result<Vec<InstanceRecord>> {
    let path = dir.join(RECORDS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::parse(&path, format!("line {}: {e}", n + 1)))?;
        out.push(record);
    }
    Ok(out)
}

/// Drops candidate lines whose run has no record (an interrupted run).
fn prune_candidates(dir: &Path, finished: &HashSet<(String, u8)>) -> Result<()> {
    let path = dir.join(CANDIDATES_FILE);
    if !path.exists() {
        return Ok(());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut kept = String::with_capacity(text.len());
    let mut dropped = 0usize;
    for line in text.lines() {
        let key: LineKey = serde_json::from_str(line).map_err(|e| Error::parse(&path, e))?;
        if finished.contains(&(key.instance, key.stage)) {
            kept.push_str(line);
            kept.push('\n');
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("dropping {dropped} candidate line(s) of unfinished runs");
        std::fs::write(&path, kept).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Loads the corpus instances selected by the config.
pub fn select_instances(config: &ExperimentConfig) -> Result<Vec<Instance>> {
    let (manifest, instances) = load_corpus(&config.corpus)?;
    if let Some(task) = config.task {
        if task != manifest.kind {
            return Err(Error::Config(format!(
                "config expects {task} but the corpus holds {} instances",
                manifest.kind
            )));
        }
    }
    let selected = instances
        .into_iter()
        .filter(|i| config.split.is_none_or(|s| s == i.entry.split))
        .take(config.limit.unwrap_or(usize::MAX))
        .collect();
    Ok(selected)
}

/// Runs the configured strategy (and, with a stage-2 block, the escalation
/// pass over first-pass failures) and writes the report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let instances = select_instances(config)?;
    let prices = match &config.prices {
        Some(path) => PriceTable::load(path)?,
        None => PriceTable::default(),
    };
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let snapshot = dir.join(CONFIG_FILE);
    std::fs::write(&snapshot, serde_json::to_string_pretty(config)? + "\n").map_err(|e| Error::io(&snapshot, e))?;

    let existing = read_records(dir)?;
    let mut finished: HashSet<(String, u8)> = existing.iter().map(|r| (r.id.clone(), r.stage)).collect();
    prune_candidates(dir, &finished)?;

    let stage1 = StageRun {
        stage: 1,
        strategy: config.strategy,
        hyper: config.hyperparameters.clone(),
        backend: &config.backend,
        config,
        prices: &prices,
    };
    let jobs: Vec<&Instance> = instances
        .iter()
        .filter(|i| !finished.contains(&(i.entry.id.clone(), 1)))
        .collect();
    if jobs.len() < instances.len() {
        log::info!("resuming: {} of {} instance(s) already done", instances.len() - jobs.len(), instances.len());
    }
    run_stage(&stage1, &jobs, config.parallelism)?;

    if config.stage2.is_some() {
        let records = read_records(dir)?;
        finished = records.iter().map(|r| (r.id.clone(), r.stage)).collect();
        let solved_first: HashSet<&str> = records
            .iter()
            .filter(|r| r.stage == 1 && r.solved)
            .map(|r| r.id.as_str())
            .collect();
        let jobs: Vec<&Instance> = instances
            .iter()
            .filter(|i| !solved_first.contains(i.entry.id.as_str()))
            .filter(|i| !finished.contains(&(i.entry.id.clone(), 2)))
            .collect();
        let stage2 = StageRun {
            stage: 2,
            strategy: config.strategy,
            hyper: config.stage2_hyperparameters(),
            backend: config.stage2_backend(),
            config,
            prices: &prices,
        };
        run_stage(&stage2, &jobs, config.parallelism)?;
    }

    let selected: HashSet<&str> = instances.iter().map(|i| i.entry.id.as_str()).collect();
    let records: Vec<InstanceRecord> = read_records(dir)?
        .into_iter()
        .filter(|r| selected.contains(r.id.as_str()))
        .collect();
    let report = build_report(config.strategy, &records);
    let path = dir.join(REPORT_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
