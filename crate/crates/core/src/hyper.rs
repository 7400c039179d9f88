//! Search hyperparameters and ablation switches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Component switches used for ablations. All enabled by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Include the critic role's instructions in refinement prompts.
    pub critic: bool,
    /// Include task-specific strategy/question hints.
    pub sq_prompts: bool,
    /// Include evaluator feedback lines for parents (the verdict is always shown).
    pub textual_feedback: bool,
    /// Ask the generator to pick diverse elites during island reset.
    pub reset_with_llm: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            critic: true,
            sq_prompts: true,
            textual_feedback: true,
            reset_with_llm: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    /// Maximum number of generations.
    pub n_gens: usize,
    /// Number of independent populations.
    pub n_island: usize,
    /// Conversations per island per generation.
    pub n_convs: usize,
    /// Turns per conversation.
    pub n_seq: usize,
    /// Reset islands every this many generations.
    pub n_reset_interval: usize,
    /// How many of the lowest-mean islands to reset.
    pub n_reset: usize,
    /// Elites cloned onto each reset island.
    pub n_top: usize,
    /// Pool size offered to the generator when it picks elites.
    pub n_candidate: usize,
    /// Maximum parents per conversation.
    pub n_parent: usize,
    /// Probability that a conversation starts without parents.
    pub pr_no_parents: f64,
    /// Candidates cloned to the next island after each island's generation.
    pub n_emigrate: usize,
    /// Generation attempts per turn before the turn is given up.
    pub n_retries: usize,
    /// Softmax temperature used in parent selection.
    pub selection_temperature: f64,
    pub ablation: Ablation,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            n_gens: 10,
            n_island: 4,
            n_convs: 5,
            n_seq: 4,
            n_reset_interval: 3,
            n_reset: 2,
            n_top: 5,
            n_candidate: 15,
            n_parent: 5,
            pr_no_parents: 1.0 / 6.0,
            n_emigrate: 5,
            n_retries: 5,
            selection_temperature: 1.0,
            ablation: Ablation::default(),
        }
    }
}

impl Hyperparameters {
    /// Upper bound on candidates a search can generate.
    pub fn candidate_budget(&self) -> usize {
        self.n_gens * self.n_island * self.n_convs * self.n_seq
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidHyperparameters(msg));
        let positive = [
            ("n_gens", self.n_gens),
            ("n_island", self.n_island),
            ("n_convs", self.n_convs),
            ("n_seq", self.n_seq),
            ("n_reset_interval", self.n_reset_interval),
            ("n_emigrate", self.n_emigrate),
            ("n_retries", self.n_retries),
            ("n_parent", self.n_parent),
            ("n_top", self.n_top),
        ];
        for (name, value) in positive {
            if value == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.n_reset > self.n_island {
            return fail(format!(
                "n_reset ({}) exceeds n_island ({})",
                self.n_reset, self.n_island
            ));
        }
        if self.n_top > self.n_candidate {
            return fail(format!(
                "n_top ({}) exceeds n_candidate ({})",
                self.n_top, self.n_candidate
            ));
        }
        if !(0.0..=1.0).contains(&self.pr_no_parents) {
            return fail(format!("pr_no_parents ({}) outside [0, 1]", self.pr_no_parents));
        }
        if !(self.selection_temperature.is_finite() && self.selection_temperature > 0.0) {
            return fail(format!(
                "selection_temperature ({}) must be positive",
                self.selection_temperature
            ));
        }
        Ok(())
    }

    pub fn with_overrides(&self, overrides: &HyperOverrides) -> Self {
        let mut h = self.clone();
        overrides.apply(&mut h);
        h
    }
}

/// Partial hyperparameter set, used for CLI flags and the stage-2 block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperOverrides {
    pub n_gens: Option<usize>,
    pub n_island: Option<usize>,
    pub n_convs: Option<usize>,
    pub n_seq: Option<usize>,
    pub n_reset_interval: Option<usize>,
    pub n_reset: Option<usize>,
    pub n_top: Option<usize>,
    pub n_candidate: Option<usize>,
    pub n_parent: Option<usize>,
    pub pr_no_parents: Option<f64>,
    pub n_emigrate: Option<usize>,
    pub n_retries: Option<usize>,
    pub selection_temperature: Option<f64>,
}

impl HyperOverrides {
    /// The settings used when escalating unsolved instances to a stronger
    /// generator: wider conversations, shorter chains, more parents.
    pub fn stronger_model() -> Self {
        Self {
            n_convs: Some(8),
            n_seq: Some(3),
            n_parent: Some(10),
            pr_no_parents: Some(1.0 / 5.0),
            ..Self::default()
        }
    }

    pub fn apply(&self, h: &mut Hyperparameters) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { h.$field = v; })*
            };
        }
        set!(
            n_gens,
            n_island,
            n_convs,
            n_seq,
            n_reset_interval,
            n_reset,
            n_top,
            n_candidate,
            n_parent,
            pr_no_parents,
            n_emigrate,
            n_retries,
            selection_temperature
        );
    }
}
