use std::collections::HashSet;
use std::path::Path;

use evoplan::baselines::Strategy;
use evoplan::gen::{load_corpus, write_corpus, Certificate, CorpusSpec};
use evoplan::harness::experiment::{read_records, CANDIDATES_FILE, RECORDS_FILE};
use evoplan::harness::report::{summarize, COST_FILE, CURVE_FILE, LEVELS_FILE};
use evoplan::harness::{run_experiment, BackendKind, ExperimentConfig, Stage2Config};
use evoplan::llm::PriceTable;
use evoplan::{HyperOverrides, TaskKind};

fn trip_corpus(dir: &Path, levels: Vec<usize>, per_level: usize) {
    write_corpus(&CorpusSpec::new(TaskKind::Trip, levels, per_level, 11), dir).unwrap();
}

fn small_config(corpus: &Path, out: &Path, strategy: Strategy) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(corpus, out);
    cfg.strategy = strategy;
    cfg.seed = 3;
    cfg.hyperparameters.n_gens = 2;
    cfg.hyperparameters.n_convs = 2;
    cfg.hyperparameters.n_reset_interval = 2;
    cfg.baselines.best_of_n = 40;
    cfg
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn best_of_n_over_ten_instances_writes_ten_records() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    trip_corpus(&corpus, vec![5, 6], 5);
    let cfg = small_config(&corpus, &tmp.path().join("out"), Strategy::BestOfN);
    let report = run_experiment(&cfg).unwrap();
    let records = read_records(&cfg.output_dir).unwrap();
    assert_eq!(records.len(), 10);
    assert_eq!(report.overall.instances, 10);
    assert_eq!(report.per_level.keys().copied().collect::<Vec<_>>(), vec![5, 6]);
    assert_eq!(report.per_level.values().map(|a| a.instances).sum::<usize>(), 10);

    // costs come straight from the ledger totals at the bundled prices
    let price = *PriceTable::default().get("gemini-1.5-flash").unwrap();
    let mut total = 0.0;
    for r in &records {
        assert_eq!(r.cost_usd, price.cost(r.input_tokens, r.output_tokens));
        assert_eq!(r.curve.last().unwrap().cost_usd, r.cost_usd);
        total += r.cost_usd;
    }
    assert!((report.overall.mean_cost_usd - total / 10.0).abs() < 1e-12);
    let solved = records.iter().filter(|r| r.solved).count();
    assert_eq!(report.overall.success_rate, solved as f64 / 10.0);

    // one candidate line per evaluated candidate
    let lines = read(&cfg.output_dir.join(CANDIDATES_FILE)).lines().count();
    assert_eq!(lines, records.iter().map(|r| r.candidates_evaluated).sum::<usize>());
}

#[test]
fn instance_parallelism_does_not_change_the_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    trip_corpus(&corpus, vec![4, 5], 3);
    let mut logs = Vec::new();
    for parallelism in [1, 4] {
        let mut cfg = small_config(&corpus, &tmp.path().join(format!("out{parallelism}")), Strategy::Evolution);
        cfg.parallelism = parallelism;
        run_experiment(&cfg).unwrap();
        logs.push(read(&cfg.output_dir.join(CANDIDATES_FILE)));
    }
    assert!(!logs[0].is_empty());
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn interrupted_runs_resume_to_the_same_output() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    trip_corpus(&corpus, vec![4], 6);

    let full = small_config(&corpus, &tmp.path().join("full"), Strategy::Evolution);
    run_experiment(&full).unwrap();

    let mut partial = small_config(&corpus, &tmp.path().join("partial"), Strategy::Evolution);
    partial.limit = Some(2);
    run_experiment(&partial).unwrap();
    // an unfinished run leaves candidate lines without a record
    let (_, instances) = load_corpus(&corpus).unwrap();
    let orphan = format!("{{\"instance\":\"{}\",\"stage\":1,\"id\":1}}\n", instances[2].entry.id);
    let log = partial.output_dir.join(CANDIDATES_FILE);
    std::fs::write(&log, read(&log) + &orphan).unwrap();

    partial.limit = None;
    run_experiment(&partial).unwrap();
    assert_eq!(read_records(&partial.output_dir).unwrap().len(), 6);
    assert_eq!(read(&log), read(&full.output_dir.join(CANDIDATES_FILE)));

    // a rerun of a finished experiment appends nothing
    let before = read(&partial.output_dir.join(RECORDS_FILE));
    run_experiment(&partial).unwrap();
    assert_eq!(read(&partial.output_dir.join(RECORDS_FILE)), before);
}

fn witness_scripts(corpus: &Path, dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    let (_, instances) = load_corpus(corpus).unwrap();
    for inst in instances {
        let Certificate::Trip { witness } = &inst.entry.certificate else {
            panic!("trip corpus")
        };
        let replies = serde_json::to_string(&vec![witness.render()]).unwrap();
        std::fs::write(dir.join(format!("{}.json", inst.entry.id)), replies).unwrap();
    }
}

#[test]
fn stage_two_is_skipped_when_stage_one_solves_everything() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    trip_corpus(&corpus, vec![5], 4);
    let scripts = tmp.path().join("scripts");
    witness_scripts(&corpus, &scripts);
    let mut cfg = small_config(&corpus, &tmp.path().join("out"), Strategy::Evolution);
    cfg.backend.kind = BackendKind::Scripted;
    cfg.backend.script = Some(scripts);
    cfg.stage2 = Some(Stage2Config::default());
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.overall.solved, 4);
    assert!(report.stage2.is_none());
    assert!(read_records(&cfg.output_dir).unwrap().iter().all(|r| r.stage == 1 && r.llm_calls == 1));
}

#[test]
fn stage_two_runs_only_on_failures_and_averages_over_them() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    trip_corpus(&corpus, vec![7, 8], 4);
    let mut cfg = small_config(&corpus, &tmp.path().join("out"), Strategy::Evolution);
    cfg.hyperparameters.n_gens = 1;
    cfg.hyperparameters.n_convs = 1;
    cfg.hyperparameters.n_seq = 1;
    cfg.stage2 = Some(Stage2Config {
        hyperparameters: HyperOverrides {
            n_gens: Some(3),
            ..HyperOverrides::stronger_model()
        },
        backend: None,
    });
    let report = run_experiment(&cfg).unwrap();
    let records = read_records(&cfg.output_dir).unwrap();
    let stage1_failed: HashSet<&str> =
        records.iter().filter(|r| r.stage == 1 && !r.solved).map(|r| r.id.as_str()).collect();
    let stage2: HashSet<&str> = records.iter().filter(|r| r.stage == 2).map(|r| r.id.as_str()).collect();
    assert!(!stage1_failed.is_empty());
    assert_eq!(stage1_failed, stage2);

    let s2 = report.stage2.clone().unwrap();
    assert_eq!(s2.instances, stage2.len());
    let stage2_cost: f64 = records.iter().filter(|r| r.stage == 2).map(|r| r.cost_usd).sum();
    assert!((s2.mean_cost_usd - stage2_cost / stage2.len() as f64).abs() < 1e-12);
    // the solved-by-stage tags partition the solved set
    assert_eq!(report.solved_by_stage.values().sum::<usize>(), report.overall.solved);
    assert_eq!(report.solved_by_stage.get(&1).copied().unwrap_or(0), report.stage1.solved);
}

#[test]
fn per_instance_failures_are_recorded_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    trip_corpus(&corpus, vec![4], 3);
    let scripts = tmp.path().join("scripts");
    witness_scripts(&corpus, &scripts);
    let (_, instances) = load_corpus(&corpus).unwrap();
    std::fs::remove_file(scripts.join(format!("{}.json", instances[1].entry.id))).unwrap();
    let mut cfg = small_config(&corpus, &tmp.path().join("out"), Strategy::OnePass);
    cfg.backend.kind = BackendKind::Scripted;
    cfg.backend.script = Some(scripts);
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.overall.instances, 3);
    assert_eq!(report.overall.errors, 1);
    assert_eq!(report.overall.solved, 2);
}

#[test]
fn corpus_and_task_mismatch_aborts() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    trip_corpus(&corpus, vec![4], 1);
    let mut cfg = small_config(&corpus, &tmp.path().join("out"), Strategy::OnePass);
    cfg.task = Some(TaskKind::Meeting);
    assert!(run_experiment(&cfg).is_err());
    let missing = small_config(&tmp.path().join("nowhere"), &tmp.path().join("out"), Strategy::OnePass);
    assert!(run_experiment(&missing).is_err());
}

#[test]
fn summaries_are_well_formed_and_leave_records_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    trip_corpus(&corpus, vec![4, 6], 4);
    let cfg = small_config(&corpus, &tmp.path().join("out"), Strategy::BestOfN);
    run_experiment(&cfg).unwrap();
    let records_before = read(&cfg.output_dir.join(RECORDS_FILE));
    summarize(&cfg.output_dir).unwrap();
    summarize(&cfg.output_dir).unwrap();
    assert_eq!(read(&cfg.output_dir.join(RECORDS_FILE)), records_before);

    let curve = read(&cfg.output_dir.join(CURVE_FILE));
    let mut last_rate = 0.0;
    for row in curve.lines().skip(1) {
        let cols: Vec<f64> = row.split('\t').map(|c| c.parse().unwrap()).collect();
        assert!(cols[4] >= last_rate, "success rate must not drop: {row}");
        assert!(cols[5] <= 0.0, "normalized scores are at most zero: {row}");
        last_rate = cols[4];
    }
    let levels = read(&cfg.output_dir.join(LEVELS_FILE));
    let counted: usize = levels.lines().skip(1).map(|r| r.split('\t').nth(1).unwrap().parse::<usize>().unwrap()).sum();
    assert_eq!(counted, 8);
    assert_eq!(read(&cfg.output_dir.join(COST_FILE)).lines().count(), 2);
}

#[test]
fn summarizing_an_empty_directory_gives_headers_only() {
    let tmp = tempfile::tempdir().unwrap();
    for path in summarize(tmp.path()).unwrap() {
        assert_eq!(read(&path).lines().count(), 1);
    }
}
