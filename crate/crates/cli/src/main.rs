use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use evoplan::baselines::Strategy;
use evoplan::gen::{default_validation_fraction, write_corpus, CorpusSpec, Knobs, Split};
use evoplan::harness::report::summarize;
use evoplan::harness::{run_experiment, BackendKind, ExperimentConfig, Report, Stage2Config};
use evoplan::tasks::Problem;
use evoplan::{Hyperparameters, TaskKind};

#[derive(Parser)]
#[command(name = "evoplan", version, about = "Evolutionary search over natural-language plans")]
struct Cli {
    /// Log more (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded instance corpus with feasibility certificates.
    GenCorpus(GenCorpusArgs),
    /// Run a strategy over a corpus.
    Run(Box<RunArgs>),
    /// Write summary tables for a finished run directory.
    Summarize(SummarizeArgs),
    /// Evaluate one plan against one instance.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    task: TaskKind,
    /// Difficulty levels: `lo-hi` or a comma list (e.g. `3-10` or `3,5,8`).
    #[arg(long)]
    levels: String,
    #[arg(long, default_value_t = 10)]
    per_level: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Share of each level in the validation split (task default if unset).
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Trip: share of non-witness city pairs that get a flight.
    #[arg(long)]
    decoy_density: Option<f64>,
    /// Trip: fixed total days instead of the witness length.
    #[arg(long)]
    total_days: Option<u32>,
    /// Hidden message: words between consecutive code words.
    #[arg(long)]
    words_between: Option<u32>,
    /// Hidden message: probability that a position repeats a number.
    #[arg(long)]
    repetition_rate: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Expected task kind, checked against the corpus.
    #[arg(long)]
    task: Option<TaskKind>,
    /// one-pass, best-of-n, seq-rev+ or mind-evolution.
    #[arg(long)]
    strategy: Option<Strategy>,
    /// scripted, synthetic or remote.
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    model: Option<String>,
    /// Scripted replies file, or directory of `<instance id>.json`.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    split: Option<Split>,
    #[arg(long)]
    limit: Option<usize>,
    /// Price table TOML file.
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Hyperparameter override, `name=value` (e.g. `n_gens=5`,
    /// `ablation.critic=false`). Repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    no_critic: bool,
    #[arg(long)]
    no_sq_prompts: bool,
    #[arg(long)]
    no_textual_feedback: bool,
    #[arg(long)]
    no_llm_reset: bool,
    /// Rerun first-pass failures with the stronger-model settings.
    #[arg(long)]
    stage2: bool,
    /// Model for the second pass (implies --stage2).
    #[arg(long)]
    stage2_model: Option<String>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Run output directory.
    dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Instance JSON file (as written under a corpus's `instances/`).
    #[arg(long)]
    instance: PathBuf,
    /// File holding the plan text; `-` reads standard input.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Also print an exact reference solution where one can be computed.
    #[arg(long)]
    oracle: bool,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

fn parse_levels(text: &str) -> Result<Vec<usize>> {
    if let Some((lo, hi)) = text.split_once('-') {
        let lo: usize = lo.trim().parse().context("level range start")?;
        let hi: usize = hi.trim().parse().context("level range end")?;
        if lo > hi {
            bail!("empty level range {text}");
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad level `{s}`")))
        .collect()
}

fn gen_corpus(args: GenCorpusArgs) -> Result<()> {
    let mut spec = CorpusSpec::new(args.task, parse_levels(&args.levels)?, args.per_level, args.seed);
    spec.validation_fraction = args.validation_fraction.unwrap_or(default_validation_fraction(args.task));
    let defaults = Knobs::default();
    spec.knobs = Knobs {
        decoy_density: args.decoy_density.unwrap_or(defaults.decoy_density),
        total_days_hint: args.total_days,
        words_between: args.words_between.unwrap_or(defaults.words_between),
        repetition_rate: args.repetition_rate.unwrap_or(defaults.repetition_rate),
        repeat_window: defaults.repeat_window,
    };
    let manifest = write_corpus(&spec, &args.out)?;
    println!("wrote {} {} instances to {}", manifest.entries.len(), args.task, args.out.display());
    Ok(())
}

/// Applies `name=value` to the hyperparameters through their JSON form, so
/// names and types are checked by the same schema as config files.
fn apply_setting(h: &mut Hyperparameters, setting: &str) -> Result<()> {
    let (name, raw) = setting
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{setting}` is not NAME=VALUE"))?;
    let value: serde_json::Value =
        serde_json::from_str(raw.trim()).unwrap_or_else(|_| serde_json::Value::String(raw.trim().to_owned()));
    let mut tree = serde_json::to_value(&*h)?;
    let mut slot = &mut tree;
    for part in name.trim().split('.') {
        slot = slot
            .get_mut(part)
            .ok_or_else(|| anyhow!("unknown hyperparameter `{name}`"))?;
    }
    *slot = value;
    *h = serde_json::from_value(tree).with_context(|| format!("override `{setting}`"))?;
    Ok(())
}

fn build_config(args: RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let corpus = args.corpus.clone().ok_or_else(|| anyhow!("--corpus is required without --config"))?;
            let out = args
                .output_dir
                .clone()
                .ok_or_else(|| anyhow!("--output-dir is required without --config"))?;
            ExperimentConfig::new(corpus, out)
        }
    };
    if let Some(v) = args.corpus {
        cfg.corpus = v;
    }
    if let Some(v) = args.output_dir {
        cfg.output_dir = v;
    }
    if let Some(v) = args.task {
        cfg.task = Some(v);
    }
    if let Some(v) = args.strategy {
        cfg.strategy = v;
    }
    if let Some(v) = args.backend {
        cfg.backend.kind = v;
    }
    if let Some(v) = args.model {
        cfg.backend.model = Some(v);
    }
    if let Some(v) = args.script {
        cfg.backend.script = Some(v);
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.parallelism {
        cfg.parallelism = v;
    }
    if let Some(v) = args.split {
        cfg.split = Some(v);
    }
    if let Some(v) = args.limit {
        cfg.limit = Some(v);
    }
    if let Some(v) = args.prices {
        cfg.prices = Some(v);
    }
    for setting in &args.set {
        apply_setting(&mut cfg.hyperparameters, setting)?;
    }
    let ablation = &mut cfg.hyperparameters.ablation;
    ablation.critic &= !args.no_critic;
    ablation.sq_prompts &= !args.no_sq_prompts;
    ablation.textual_feedback &= !args.no_textual_feedback;
    ablation.reset_with_llm &= !args.no_llm_reset;
    if args.stage2 || args.stage2_model.is_some() {
        let stage2 = cfg.stage2.get_or_insert_with(Stage2Config::default);
        if let Some(model) = args.stage2_model {
            let mut backend = stage2.backend.clone().unwrap_or_else(|| cfg.backend.clone());
            backend.model = Some(model);
            stage2.backend = Some(backend);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(report: &Report) {
    let line = |label: &str, a: &evoplan::harness::Aggregate| {
        println!(
            "{label:<12} {:>4}/{:<4} solved ({:>6.2}%)  calls {:>8.1}  in {:>10.0}  out {:>9.0}  cost ${:.4}",
            a.solved,
            a.instances,
            100.0 * a.success_rate,
            a.mean_llm_calls,
            a.mean_input_tokens,
            a.mean_output_tokens,
            a.mean_cost_usd
        );
    };
    println!("strategy: {}", report.strategy);
    line("overall", &report.overall);
    if let Some(s2) = &report.stage2 {
        line("stage 1", &report.stage1);
        line("stage 2", s2);
    }
    for (level, a) in &report.per_level {
        line(&format!("level {level}"), a);
    }
    if report.overall.errors > 0 {
        println!("{} instance(s) failed; see records.jsonl", report.overall.errors);
    }
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = build_config(args)?;
    let report = run_experiment(&cfg)?;
    print_report(&report);
    println!("output: {}", cfg.output_dir.display());
    Ok(())
}

fn read_plan(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text)?;
        return Ok(text);
    }
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn oracle_text(problem: &Problem) -> Result<String> {
    Ok(match problem {
        Problem::Trip(p) => match p.brute_force()? {
            Some(it) => it.render(),
            None => "infeasible".to_owned(),
        },
        Problem::Meeting(p) => {
            let (optimum, plan) = p.brute_force()?;
            format!("optimum: {optimum}\n{}", plan.render())
        }
        Problem::Steg(p) => evoplan::gen::certificate_solution(p).render(),
    })
}

fn eval(args: EvalArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.instance)
        .with_context(|| format!("reading {}", args.instance.display()))?;
    let problem: Problem =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.instance.display()))?;
    if args.plan.is_none() && !args.oracle {
        bail!("nothing to do: pass --plan and/or --oracle");
    }
    let mut solved = true;
    if let Some(path) = &args.plan {
        let result = problem.task().evaluate_raw(&read_plan(path)?);
        solved = result.solved;
        if args.json {
            println!("{}", serde_json::to_string_pretty(&result)?);
        } else {
            println!("score: {} (normalized {})", result.score, result.normalized);
            println!("verdict: {}", result.verdict());
            for line in result.feedback.iter().chain(&result.notes) {
                println!("- {line}");
            }
        }
    }
    if args.oracle {
        println!("reference:\n{}", oracle_text(&problem)?);
    }
    Ok(if solved { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::GenCorpus(a) => gen_corpus(a).map(|()| ExitCode::SUCCESS),
        Command::Run(a) => run(*a).map(|()| ExitCode::SUCCESS),
        Command::Summarize(a) => summarize(&a.dir)
            .map(|paths| {
                for p in paths {
                    println!("{}", p.display());
                }
                ExitCode::SUCCESS
            })
            .map_err(Into::into),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_lists_and_ranges() {
        assert_eq!(parse_levels("3-6").unwrap(), vec![3, 4, 5, 6]);
        assert_eq!(parse_levels("3, 5,8").unwrap(), vec![3, 5, 8]);
        assert!(parse_levels("6-3").is_err());
        assert!(parse_levels("x").is_err());
    }

    #[test]
    fn settings_go_through_the_schema() {
        let mut h = Hyperparameters::default();
        apply_setting(&mut h, "n_gens=3").unwrap();
        apply_setting(&mut h, "pr_no_parents=0.25").unwrap();
        apply_setting(&mut h, "ablation.sq_prompts=false").unwrap();
        assert_eq!((h.n_gens, h.pr_no_parents, h.ablation.sq_prompts), (3, 0.25, false));
        assert!(apply_setting(&mut h, "n_gens").is_err());
        assert!(apply_setting(&mut h, "n_gens=three").is_err());
        assert!(apply_setting(&mut h, "ablation.nope=true").is_err());
    }
}
