//! Aggregates over instance records, and tab-separated summaries for
//! plotting. Nothing here writes to the record files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::{read_records, CurvePoint, InstanceRecord};
use crate::baselines::Strategy;
use crate::error::{Error, Result};
use crate::gen::Split;

/// Means over a set of instances. All zero for an empty set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub instances: usize,
    pub solved: usize,
    pub success_rate: f64,
    pub errors: usize,
    pub mean_candidates: f64,
    pub mean_llm_calls: f64,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
    pub mean_cost_usd: f64,
    pub total_cost_usd: f64,
}

/// One instance across all of its stages.
#[derive(Debug, Clone, PartialEq)]
struct Combined {
    level: usize,
    split: Split,
    solved_stage: Option<u8>,
    error: bool,
    candidates: usize,
    llm_calls: usize,
    input_tokens: u64,
    output_tokens: u64,
    cost_usd: f64,
}

impl Combined {
    fn of(record: &InstanceRecord) -> Self {
        Self {
            level: record.level,
            split: record.split,
            solved_stage: record.solved.then_some(record.stage),
            error: record.error.is_some(),
            candidates: record.candidates_generated,
            llm_calls: record.llm_calls,
            input_tokens: record.input_tokens,
            output_tokens: record.output_tokens,
            cost_usd: record.cost_usd,
        }
    }

    fn absorb(&mut self, other: Combined) {
        self.solved_stage = match (self.solved_stage, other.solved_stage) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.error |= other.error;
        self.candidates += other.candidates;
        self.llm_calls += other.llm_calls;
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.cost_usd += other.cost_usd;
    }
}

fn aggregate<'a>(items: impl IntoIterator<Item = &'a Combined>) -> Aggregate {
    let items: Vec<&Combined> = items.into_iter().collect();
    let n = items.len();
    if n == 0 {
        return Aggregate::default();
    }
    let mean = |f: &dyn Fn(&Combined) -> f64| items.iter().map(|c| f(c)).sum::<f64>() / n as f64;
    let solved = items.iter().filter(|c| c.solved_stage.is_some()).count();
    let total_cost_usd = items.iter().map(|c| c.cost_usd).sum();
    Aggregate {
        instances: n,
        solved,
        success_rate: solved as f64 / n as f64,
        errors: items.iter().filter(|c| c.error).count(),
        mean_candidates: mean(&|c| c.candidates as f64),
        mean_llm_calls: mean(&|c| c.llm_calls as f64),
        mean_input_tokens: mean(&|c| c.input_tokens as f64),
        mean_output_tokens: mean(&|c| c.output_tokens as f64),
        mean_cost_usd: total_cost_usd / n as f64,
        total_cost_usd,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub strategy: Strategy,
    /// Per instance, summed over stages; solved if any stage solved it.
    pub overall: Aggregate,
    pub stage1: Aggregate,
    /// Over the instances the second pass ran on (first-pass failures).
    pub stage2: Option<Aggregate>,
    pub per_level: BTreeMap<usize, Aggregate>,
    pub per_split: BTreeMap<Split, Aggregate>,
    /// Instances solved, keyed by the first stage that solved them.
    pub solved_by_stage: BTreeMap<u8, usize>,
}

fn combine(records: &[InstanceRecord], stage: Option<u8>) -> BTreeMap<&str, Combined> {
    let mut out: BTreeMap<&str, Combined> = BTreeMap::new();
    for r in records.iter().filter(|r| stage.is_none_or(|s| s == r.stage)) {
        let c = Combined::of(r);
        match out.get_mut(r.id.as_str()) {
            Some(existing) => existing.absorb(c),
            None => {
                out.insert(&r.id, c);
            }
        }
    }
    out
}

/// Aggregates records of one experiment.
pub fn build_report(strategy: Strategy, records: &[InstanceRecord]) -> Report {
    let all = combine(records, None);
    let stage1 = combine(records, Some(1));
    let stage2 = combine(records, Some(2));
    let mut per_level: BTreeMap<usize, Vec<&Combined>> = BTreeMap::new();
    let mut per_split: BTreeMap<Split, Vec<&Combined>> = BTreeMap::new();
    let mut solved_by_stage: BTreeMap<u8, usize> = BTreeMap::new();
    for c in all.values() {
        per_level.entry(c.level).or_default().push(c);
        per_split.entry(c.split).or_default().push(c);
        if let Some(s) = c.solved_stage {
            *solved_by_stage.entry(s).or_default() += 1;
        }
    }
    Report {
        strategy,
        overall: aggregate(all.values()),
        stage1: aggregate(stage1.values()),
        stage2: (!stage2.is_empty()).then(|| aggregate(stage2.values())),
        per_level: per_level.into_iter().map(|(k, v)| (k, aggregate(v))).collect(),
        per_split: per_split.into_iter().map(|(k, v)| (k, aggregate(v))).collect(),
        solved_by_stage,
    }
}

/// The curve value in effect once `budget` candidates were counted.
fn at_budget(curve: &[CurvePoint], budget: usize) -> Option<&CurvePoint> {
    let k = curve.partition_point(|p| p.candidates <= budget);
    k.checked_sub(1).map(|i| &curve[i])
}

pub const CURVE_FILE: &str = "success_vs_candidates.tsv";
pub const LEVELS_FILE: &str = "success_by_level.tsv";
pub const COST_FILE: &str = "success_vs_cost.tsv";

/// Success rate and mean best normalized score against the number of
/// candidates, per stage. Instances count as unsolved before their first
/// candidate; the score mean covers instances with at least one.
/// Budgets are every distinct curve x value.
pub fn curve_table(records: &[InstanceRecord]) -> String {
    let mut out = String::from("stage\tcandidates\tinstances\twith_candidates\tsuccess_rate\tmean_best_normalized\tmean_cost_usd\n");
    let mut stages: Vec<u8> = records.iter().map(|r| r.stage).collect();
    stages.sort_unstable();
    stages.dedup();
    for stage in stages {
        let rs: Vec<&InstanceRecord> = records.iter().filter(|r| r.stage == stage).collect();
        let mut budgets: Vec<usize> = rs.iter().flat_map(|r| r.curve.iter().map(|p| p.candidates)).collect();
        budgets.sort_unstable();
        budgets.dedup();
        let n = rs.len() as f64;
        for b in budgets {
            let (mut with, mut solved, mut score, mut cost) = (0usize, 0usize, 0.0, 0.0);
            for r in &rs {
                if let Some(p) = at_budget(&r.curve, b) {
                    with += 1;
                    solved += usize::from(p.solved);
                    score += p.best_normalized;
                    cost += p.cost_usd;
                }
            }
            let _ = writeln!(
                out,
                "{stage}\t{b}\t{}\t{with}\t{:.6}\t{:.6}\t{:.8}",
                rs.len(),
                solved as f64 / n,
                score / with as f64,
                cost / n
            );
        }
    }
    out
}

/// Instances and success per difficulty level, split by solving stage.
pub fn level_table(records: &[InstanceRecord]) -> String {
    let mut out = String::from("level\tinstances\tsolved\tsolved_stage1\tsolved_stage2\tsuccess_rate\n");
    let all = combine(records, None);
    let mut levels: BTreeMap<usize, [usize; 4]> = BTreeMap::new();
    for c in all.values() {
        let row = levels.entry(c.level).or_default();
        row[0] += 1;
        match c.solved_stage {
            Some(1) => {
                row[1] += 1;
                row[2] += 1;
            }
            Some(_) => {
                row[1] += 1;
                row[3] += 1;
            }
            None => {}
        }
    }
    for (level, [n, solved, s1, s2]) in levels {
        let _ = writeln!(out, "{level}\t{n}\t{solved}\t{s1}\t{s2}\t{:.6}", solved as f64 / n as f64);
    }
    out
}

/// Success against mean cost, stage by stage: row `k` covers stages
/// `1..=k`, summing costs over the stages each instance ran.
pub fn cost_table(records: &[InstanceRecord]) -> String {
    let mut out = String::from("through_stage\tinstances\tsolved\tsuccess_rate\tmean_cost_usd\n");
    let mut stages: Vec<u8> = records.iter().map(|r| r.stage).collect();
    stages.sort_unstable();
    stages.dedup();
    for &last in &stages {
        let upto: Vec<InstanceRecord> = records.iter().filter(|r| r.stage <= last).cloned().collect();
        let a = aggregate(combine(&upto, None).values());
        let _ = writeln!(
            out,
            "{last}\t{}\t{}\t{:.6}\t{:.8}",
            a.instances, a.solved, a.success_rate, a.mean_cost_usd
        );
    }
    out
}

/// Writes the three summary tables next to the records; returns their paths.
pub fn summarize(dir: &Path) -> Result<Vec<PathBuf>> {
    let records = read_records(dir)?;
    let mut written = Vec::new();
    for (name, text) in [
        (CURVE_FILE, curve_table(&records)),
        (LEVELS_FILE, level_table(&records)),
        (COST_FILE, cost_table(&records)),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
