//! Seeded instance generators with feasibility certificates, and corpus
//! files built from them.
//!
//! A corpus directory holds one JSON file per instance under `instances/`
//! and a `manifest.json` listing every instance with its difficulty level,
//! split and certificate. Within each level the first instances form the
//! validation split and the rest the test split.

pub mod meeting;
pub mod steg;
pub mod trip;

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::TaskKind;
use crate::seed;
use crate::tasks::meeting::MeetingPlan;
use crate::tasks::steg::StegSolution;
use crate::tasks::trip::TripItinerary;
use crate::tasks::Problem;

pub use meeting::{gen_meeting_instance, MeetingOptimum};
pub use steg::{certificate_solution, gen_steg_instance, StegSpec};
pub use trip::{gen_trip_instance, TripSpec};

/// One instance to generate. `level` is the city count (trip), friend count
/// (meeting) or message length (steg).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifficultySpec {
    pub kind: TaskKind,
    pub level: usize,
    pub knobs: Knobs,
    pub seed: u64,
}

/// Task-specific generation knobs that are not the level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Knobs {
    pub decoy_density: f64,
    pub total_days_hint: Option<u32>,
    pub words_between: u32,
    pub repetition_rate: f64,
    pub repeat_window: usize,
}

impl Default for Knobs {
    fn default() -> Self {
        let steg = StegSpec::new(10, 4);
        Self {
            decoy_density: trip::DEFAULT_DECOY_DENSITY,
            total_days_hint: None,
            words_between: steg.words_between,
            repetition_rate: steg.repetition_rate,
            repeat_window: steg.repeat_window,
        }
    }
}

/// Evidence that an instance is feasible, and what its best score is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Certificate {
    Trip { witness: TripItinerary },
    Meeting { optimum: u32, witness: MeetingPlan },
    Steg { solution: StegSolution },
}

impl Certificate {
    /// Checks the certificate against the problem with the task evaluator.
    pub fn verify(&self, problem: &Problem) -> bool {
        match (self, problem) {
            (Certificate::Trip { witness }, Problem::Trip(p)) => p.evaluate_itinerary(witness).solved,
            (Certificate::Meeting { optimum, witness }, Problem::Meeting(p)) => {
                let r = p.evaluate_plan(witness);
                r.score == f64::from(*optimum) && r.feedback.is_empty()
            }
            (Certificate::Steg { solution }, Problem::Steg(p)) => p.evaluate_solution(solution).solved,
            _ => false,
        }
    }
}

/// Generates one instance and its certificate. Pure in `spec`.
pub fn generate(spec: &DifficultySpec) -> Result<(Problem, Certificate)> {
    let mut rng: ChaCha8Rng = seed::rng(spec.seed, &[spec.kind as u64, spec.level as u64]);
    let k = &spec.knobs;
    Ok(match spec.kind {
        TaskKind::Trip => {
            let trip_spec = TripSpec {
                n_cities: spec.level,
                total_days_hint: k.total_days_hint,
                decoy_density: k.decoy_density,
            };
            let (p, witness) = gen_trip_instance(&trip_spec, &mut rng)?;
            (Problem::Trip(p), Certificate::Trip { witness })
        }
        TaskKind::Meeting => {
            let (p, cert) = gen_meeting_instance(spec.level, &mut rng)?;
            (
                Problem::Meeting(p),
                Certificate::Meeting {
                    optimum: cert.optimum,
                    witness: cert.witness,
                },
            )
        }
        TaskKind::Steg => {
            let steg_spec = StegSpec {
                message_len: spec.level,
                words_between: k.words_between,
                repetition_rate: k.repetition_rate,
                repeat_window: k.repeat_window,
            };
            let p = gen_steg_instance(&steg_spec, &mut rng)?;
            let solution = certificate_solution(&p);
            (Problem::Steg(p), Certificate::Steg { solution })
        }
    })
}

/// Default share of each level that goes to the validation split.
pub fn default_validation_fraction(kind: TaskKind) -> f64 {
    match kind {
        TaskKind::Trip => 0.2,
        TaskKind::Meeting => 0.5,
        TaskKind::Steg => 0.3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Validation,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// What to put in a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub kind: TaskKind,
    pub levels: Vec<usize>,
    pub per_level: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    pub knobs: Knobs,
}

impl CorpusSpec {
    pub fn new(kind: TaskKind, levels: Vec<usize>, per_level: usize, seed: u64) -> Self {
        Self {
            kind,
            levels,
            per_level,
            seed,
            validation_fraction: default_validation_fraction(kind),
            knobs: Knobs::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub level: usize,
    pub split: Split,
    /// Path relative to the corpus directory.
    pub file: String,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: TaskKind,
    pub seed: u64,
    pub knobs: Knobs,
    pub entries: Vec<ManifestEntry>,
}

/// A loaded corpus entry.
#[derive(Debug, Clone)]
pub struct Instance {
    pub entry: ManifestEntry,
    pub problem: Problem,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn instance_id(kind: TaskKind, level: usize, index: usize) -> String {
    format!("{kind}-l{level:02}-{index:04}")
}

/// Generates every instance of `spec` in memory.
pub fn build_corpus(spec: &CorpusSpec) -> Result<(Manifest, Vec<Problem>)> {
    if !(0.0..=1.0).contains(&spec.validation_fraction) {
        return Err(Error::Config(format!(
            "validation fraction {} outside [0, 1]",
            spec.validation_fraction
        )));
    }
    let n_validation = (spec.validation_fraction * spec.per_level as f64).round() as usize;
    let mut entries = Vec::new();
    let mut problems = Vec::new();
    for &level in &spec.levels {
        for index in 0..spec.per_level {
            let id = instance_id(spec.kind, level, index);
            let (problem, certificate) = generate(&DifficultySpec {
                kind: spec.kind,
                level,
                knobs: spec.knobs,
                seed: seed::derive_str(spec.seed, &id),
            })?;
            entries.push(ManifestEntry {
                file: format!("instances/{id}.json"),
                id,
                level,
                split: if index < n_validation { Split::Validation } else { Split::Test },
                certificate,
            });
            problems.push(problem);
        }
    }
    let manifest = Manifest {
        kind: spec.kind,
        seed: spec.seed,
        knobs: spec.knobs,
        entries,
    };
    Ok((manifest, problems))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Generates the corpus and writes it under `dir`.
pub fn write_corpus(spec: &CorpusSpec, dir: &Path) -> Result<Manifest> {
    let (manifest, problems) = build_corpus(spec)?;
    let instances = dir.join("instances");
    std::fs::create_dir_all(&instances).map_err(|e| Error::io(&instances, e))?;
    for (entry, problem) in manifest.entries.iter().zip(&problems) {
        write_json(&dir.join(&entry.file), problem)?;
    }
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}

/// Reads a corpus directory back.
pub fn load_corpus(dir: &Path) -> Result<(Manifest, Vec<Instance>)> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    let instances = manifest
        .entries
        .iter()
        .map(|entry| {
            let path: PathBuf = dir.join(&entry.file);
            let problem: Problem = read_json(&path)?;
            if problem.kind() != manifest.kind {
                return Err(Error::parse(path, format!("expected a {} instance", manifest.kind)));
            }
            Ok(Instance {
                entry: entry.clone(),
                problem,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, instances))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_pure() {
        for kind in [TaskKind::Trip, TaskKind::Meeting, TaskKind::Steg] {
            let level = if kind == TaskKind::Steg { 12 } else { 5 };
            let spec = DifficultySpec {
                kind,
                level,
                knobs: Knobs::default(),
                seed: 42,
            };
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
            let other = DifficultySpec { seed: 43, ..spec };
            assert_ne!(generate(&spec).unwrap().0, generate(&other).unwrap().0);
        }
    }

    #[test]
    fn certificates_verify() {
        for kind in [TaskKind::Trip, TaskKind::Meeting, TaskKind::Steg] {
            for seed in 0..25 {
                let level = match kind {
                    TaskKind::Trip => 3 + seed as usize % 8,
                    TaskKind::Meeting => 1 + seed as usize % 10,
                    TaskKind::Steg => 10 + seed as usize % 21,
                };
                let (p, c) = generate(&DifficultySpec {
                    kind,
                    level,
                    knobs: Knobs::default(),
                    seed,
                })
                .unwrap();
                assert!(c.verify(&p), "{kind} level {level} seed {seed}");
            }
        }
    }

    #[test]
    fn splits_take_the_first_of_each_level() {
        let spec = CorpusSpec::new(TaskKind::Trip, vec![3, 4], 10, 1);
        let (m, problems) = build_corpus(&spec).unwrap();
        assert_eq!(problems.len(), 20);
        for level in [3, 4] {
            let splits: Vec<Split> = m.entries.iter().filter(|e| e.level == level).map(|e| e.split).collect();
            assert_eq!(&splits[..2], &[Split::Validation; 2]);
            assert!(splits[2..].iter().all(|s| *s == Split::Test));
        }
    }

    #[test]
    fn corpus_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec::new(TaskKind::Meeting, vec![2, 3], 3, 9);
        let written = write_corpus(&spec, dir.path()).unwrap();
        let (manifest, instances) = load_corpus(dir.path()).unwrap();
        assert_eq!(manifest, written);
        assert_eq!(instances.len(), 6);
        for inst in &instances {
            assert!(inst.entry.certificate.verify(&inst.problem));
        }
    }
}
