//! Experiment configuration (TOML) and backend construction.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineBudget, Strategy};
use crate::error::{Error, Result};
use crate::eval::TaskKind;
use crate::gen::Split;
use crate::hyper::{HyperOverrides, Hyperparameters};
use crate::llm::remote::{RemoteBackend, RemoteConfig};
use crate::llm::scripted::{read_replies, ScriptedBackend};
use crate::llm::synthetic::SyntheticBackend;
use crate::llm::{Backend, Generator};
use crate::tasks::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    /// Replays canned replies from `script`.
    Scripted,
    /// Offline task-aware mutator.
    Synthetic,
    /// Text-completion HTTP endpoint.
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scripted" => Ok(BackendKind::Scripted),
            "synthetic" => Ok(BackendKind::Synthetic),
            "remote" => Ok(BackendKind::Remote),
            other => Err(Error::Config(format!("unknown backend `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Model name for usage records and pricing. Backend default if unset.
    pub model: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Scripted replies: a JSON array used for every instance, or a
    /// directory holding `<instance id>.json` per instance.
    pub script: Option<PathBuf>,
    /// Scripted reset-selection replies, same layout as `script`.
    pub reset_script: Option<PathBuf>,
    pub remote: RemoteConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Synthetic,
            model: None,
            temperature: 1.0,
            max_output_tokens: 4096,
            script: None,
            reset_script: None,
            remote: RemoteConfig::default(),
        }
    }
}

fn script_path(path: &Path, instance_id: &str) -> PathBuf {
    if path.is_dir() {
        path.join(format!("{instance_id}.json"))
    } else {
        path.to_owned()
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kind == BackendKind::Scripted && self.script.is_none() {
            return Err(Error::Config("scripted backend needs `script`".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Config(format!("temperature {} is invalid", self.temperature)));
        }
        Ok(())
    }

    /// A fresh generator (and so a fresh ledger) for one instance run.
    pub fn generator(&self, problem: &Problem, instance_id: &str, seed: u64) -> Result<Generator> {
        let backend: Arc<dyn Backend> = match self.kind {
            BackendKind::Scripted => {
                let script = self.script.as_ref().ok_or_else(|| Error::Config("missing script".into()))?;
                let mut b = ScriptedBackend::from_file(&script_path(script, instance_id))?;
                if let Some(reset) = &self.reset_script {
                    b = b.with_reset_replies(read_replies(&script_path(reset, instance_id))?);
                }
                if let Some(model) = &self.model {
                    b = b.with_model(model);
                }
                Arc::new(b)
            }
            BackendKind::Synthetic => {
                let mut b = SyntheticBackend::for_problem(problem, seed);
                if let Some(model) = &self.model {
                    b = b.with_model(model);
                }
                Arc::new(b)
            }
            BackendKind::Remote => {
                let mut cfg = self.remote.clone();
                if let Some(model) = &self.model {
                    cfg.model = model.clone();
                }
                Arc::new(RemoteBackend::new(cfg))
            }
        };
        let mut generator = Generator::new(backend);
        generator.temperature = self.temperature;
        generator.max_output_tokens = self.max_output_tokens;
        Ok(generator)
    }
}

/// Second pass over the instances the first pass left unsolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Config {
    pub hyperparameters: HyperOverrides,
    /// Backend for the second pass; the first-pass backend if unset.
    pub backend: Option<BackendConfig>,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            hyperparameters: HyperOverrides::stronger_model(),
            backend: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Expected task; checked against the corpus manifest when set.
    #[serde(default)]
    pub task: Option<TaskKind>,
    pub corpus: PathBuf,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Instances run concurrently.
    #[serde(default = "one")]
    pub parallelism: usize,
    /// Only run this split.
    #[serde(default)]
    pub split: Option<Split>,
    /// Only run the first this many selected instances.
    #[serde(default)]
    pub limit: Option<usize>,
    /// Price table file; the bundled table if unset.
    #[serde(default)]
    pub prices: Option<PathBuf>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub baselines: BaselineBudget,
    #[serde(default)]
    pub stage2: Option<Stage2Config>,
}

fn default_strategy() -> Strategy {
    Strategy::Evolution
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(corpus: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            task: None,
            corpus: corpus.into(),
            strategy: default_strategy(),
            seed: 0,
            output_dir: output_dir.into(),
            parallelism: 1,
            split: None,
            limit: None,
            prices: None,
            backend: BackendConfig::default(),
            hyperparameters: Hyperparameters::default(),
            baselines: BaselineBudget::default(),
            stage2: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::parse(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.corpus);
        fix(&mut cfg.output_dir);
        if let Some(p) = cfg.prices.as_mut() {
            fix(p);
        }
        for backend in std::iter::once(&mut cfg.backend).chain(cfg.stage2.as_mut().and_then(|s| s.backend.as_mut())) {
            if let Some(p) = backend.script.as_mut() {
                fix(p);
            }
            if let Some(p) = backend.reset_script.as_mut() {
                fix(p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparameters.validate()?;
        self.backend.validate()?;
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if let Some(stage2) = &self.stage2 {
            if self.strategy != Strategy::Evolution {
                return Err(Error::Config(format!(
                    "a stage-2 block needs the {} strategy, not {}",
                    Strategy::Evolution,
                    self.strategy
                )));
            }
            self.stage2_hyperparameters().validate()?;
            if let Some(b) = &stage2.backend {
                b.validate()?;
            }
        }
        Ok(())
    }

    pub fn stage2_hyperparameters(&self) -> Hyperparameters {
        match &self.stage2 {
            Some(s) => self.hyperparameters.with_overrides(&s.hyperparameters),
            None => self.hyperparameters.clone(),
        }
    }

    pub fn stage2_backend(&self) -> &BackendConfig {
        self.stage2
            .as_ref()
            .and_then(|s| s.backend.as_ref())
            .unwrap_or(&self.backend)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
task = "trip"
corpus = "corpus"
strategy = "mind-evolution"
seed = 7
output_dir = "out"
parallelism = 4

[backend]
kind = "synthetic"
model = "gemini-1.5-flash"

[hyperparameters]
n_gens = 5

[hyperparameters.ablation]
critic = false

[stage2]
[stage2.backend]
kind = "synthetic"
model = "gemini-1.5-pro"
"#;

    #[test]
    fn full_config_parses_with_stage2_defaults() {
        let cfg = ExperimentConfig::from_toml(FULL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.task, Some(TaskKind::Trip));
        assert_eq!(cfg.hyperparameters.n_gens, 5);
        assert!(!cfg.hyperparameters.ablation.critic);
        let h2 = cfg.stage2_hyperparameters();
        assert_eq!((h2.n_gens, h2.n_convs, h2.n_seq, h2.n_parent), (5, 8, 3, 10));
        assert_eq!(cfg.stage2_backend().model.as_deref(), Some("gemini-1.5-pro"));
    }

    #[test]
    fn stage2_requires_the_evolutionary_strategy() {
        let text = FULL.replace("mind-evolution", "best-of-n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("corpus = 'c'\noutput_dir = 'o'\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("corpus = 'c'\noutput_dir = 'o'\n[hyperparameters]\nn_gen = 1\n").is_err());
    }

    #[test]
    fn scripted_backend_needs_a_script() {
        let mut cfg = ExperimentConfig::new("c", "o");
        cfg.backend.kind = BackendKind::Scripted;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "corpus = 'c'\noutput_dir = 'o'\n").unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.corpus, dir.path().join("c"));
        assert_eq!(cfg.output_dir, dir.path().join("o"));
    }

    #[test]
    fn bundled_example_config_is_valid() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/trip-two-stage.toml");
        let cfg = ExperimentConfig::load(&path).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.split, Some(Split::Validation));
        assert_eq!(cfg.stage2_hyperparameters().n_seq, 3);
        assert_eq!(cfg.stage2_backend().model.as_deref(), Some("gemini-1.5-pro"));
    }
}
