//! Prompt assembly.
//!
//! A rendered prompt always has its sections in this order: general
//! instructions, problem definition, few-shot examples, task description,
//! candidate solutions with their evaluations, and the critical-conversation
//! instructions (critic, strategy/question hints, author).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eval::EvaluationResult;
use crate::hyper::Ablation;

pub const SOLUTION_OPEN: &str = "<solution>";
pub const SOLUTION_CLOSE: &str = "</solution>";
const CANDIDATE_HEADER: &str = "=== Candidate solution";
const SELECTED_PREFIX: &str = "Selected:";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub general_instructions: String,
    pub problem_definition: String,
    pub few_shot_examples: Vec<String>,
    pub task_description: String,
    /// Critic role: analyse the candidates and their feedback.
    pub critic_instructions: String,
    /// Author role: write one (refined) solution in the required format.
    pub author_instructions: String,
    /// Used instead of the author instructions when no candidates are shown.
    /// Falls back to `author_instructions` when empty.
    #[serde(default)]
    pub initial_instructions: String,
    /// Task-specific strategy and question hints for the critic.
    pub strategy_questions: String,
}

/// A solution shown to the generator together with its evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ParentView<'a> {
    pub text: &'a str,
    pub evaluation: &'a EvaluationResult,
}

/// How the candidates in the prompt relate to the requested output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMode {
    /// Several parents to recombine into one new solution.
    Recombine,
    /// A single previous solution to refine.
    Refine,
}

fn format_score(score: f64) -> String {
    if score.fract() == 0.0 && score.abs() < 1e15 {
        format!("{score:.0}")
    } else {
        format!("{score:.4}")
    }
}

fn push_section(out: &mut String, body: &str) {
    let body = body.trim();
    if body.is_empty() {
        return;
    }
    if !out.is_empty() {
        out.push_str("\n\n");
    }
    out.push_str(body);
}

fn render_candidates(out: &mut String, parents: &[ParentView<'_>], textual_feedback: bool) {
    for (i, parent) in parents.iter().enumerate() {
        let mut block = String::new();
        let eval = parent.evaluation;
        let _ = writeln!(block, "{CANDIDATE_HEADER} {} ===", i + 1);
        let _ = writeln!(block, "Score: {} ({})", format_score(eval.score), eval.verdict());
        let _ = writeln!(block, "{SOLUTION_OPEN}\n{}\n{SOLUTION_CLOSE}", parent.text.trim());
        if textual_feedback {
            if eval.feedback.is_empty() && eval.notes.is_empty() {
                block.push_str("Evaluation feedback: none.");
            } else {
                block.push_str("Evaluation feedback:");
                for line in eval.feedback.iter().chain(&eval.notes) {
                    let _ = write!(block, "\n- {line}");
                }
            }
        }
        push_section(out, &block);
    }
}

fn render_preamble(out: &mut String, template: &PromptTemplate, with_examples: bool) {
    push_section(out, &template.general_instructions);
    push_section(out, &template.problem_definition);
    if with_examples && !template.few_shot_examples.is_empty() {
        let mut examples = String::from("Here are some examples:");
        for (i, example) in template.few_shot_examples.iter().enumerate() {
            let _ = write!(examples, "\n\nEXAMPLE {}:\n{}", i + 1, example.trim());
        }
        push_section(out, &examples);
    }
    push_section(out, &template.task_description);
}

/// Renders a proposal prompt. With no parents this is the initial-solution
/// prompt; otherwise the parents and the critical-conversation instructions
/// follow the task description.
pub fn build_prompt(
    template: &PromptTemplate,
    parents: &[ParentView<'_>],
    mode: PromptMode,
    flags: &Ablation,
) -> String {
    let mut out = String::new();
    render_preamble(&mut out, template, true);
    if parents.is_empty() {
        if template.initial_instructions.trim().is_empty() {
            push_section(&mut out, &template.author_instructions);
        } else {
            push_section(&mut out, &template.initial_instructions);
        }
        return out;
    }

    let intro = match mode {
        PromptMode::Recombine if parents.len() > 1 => format!(
            "Below are {} candidate solutions with their evaluations. Combine their strengths into one improved solution.",
            parents.len()
        ),
        PromptMode::Recombine => {
            "Below is a candidate solution with its evaluation. Use it as a starting point for an improved solution."
                .to_owned()
        }
        PromptMode::Refine => {
            "Below is your previous solution with its evaluation. Refine it.".to_owned()
        }
    };
    push_section(&mut out, &intro);
    render_candidates(&mut out, parents, flags.textual_feedback);

    if flags.critic {
        push_section(&mut out, &template.critic_instructions);
    }
    if flags.sq_prompts {
        push_section(&mut out, &template.strategy_questions);
    }
    push_section(&mut out, &template.author_instructions);
    out
}

/// Prompt asking the generator to pick `n_top` diverse elites out of `pool`.
pub fn build_reset_prompt(
    template: &PromptTemplate,
    pool: &[ParentView<'_>],
    n_top: usize,
    flags: &Ablation,
) -> String {
    let mut out = String::new();
    render_preamble(&mut out, template, false);
    push_section(
        &mut out,
        &format!(
            "Below are the {} best solutions found so far, numbered 1 to {}.",
            pool.len(),
            pool.len()
        ),
    );
    render_candidates(&mut out, pool, flags.textual_feedback);
    push_section(
        &mut out,
        &format!(
            "Choose {n_top} of these solutions that are good and substantially different from each other. \
             They will seed new populations, so prefer variety over near-duplicates. \
             Answer with a single line of the form `{SELECTED_PREFIX} 1, 4, 7`."
        ),
    );
    out
}

/// Extracts the 1-based selections from a reset reply, keeping order,
/// dropping duplicates and out-of-range numbers. `None` if nothing usable.
pub fn parse_reset_selection(reply: &str, pool_len: usize, n_top: usize) -> Option<Vec<usize>> {
    let line = reply
        .lines()
        .rev()
        .find(|l| l.trim_start().starts_with(SELECTED_PREFIX))
        .map(|l| &l.trim_start()[SELECTED_PREFIX.len()..])
        .unwrap_or(reply);
    let mut picked = Vec::new();
    for token in line.split(|c: char| !c.is_ascii_digit()) {
        let Ok(n) = token.parse::<usize>() else {
            continue;
        };
        if (1..=pool_len).contains(&n) && !picked.contains(&n) {
            picked.push(n);
            if picked.len() == n_top {
                break;
            }
        }
    }
    (!picked.is_empty()).then_some(picked)
}

/// A candidate block recovered from a rendered prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedCandidate {
    pub score: Option<f64>,
    pub text: String,
}

/// Inverse of the candidate rendering, used by backends that work offline.
pub fn extract_candidates(prompt: &str) -> Vec<RenderedCandidate> {
    let mut found = Vec::new();
    for chunk in prompt.split(CANDIDATE_HEADER).skip(1) {
        let score = chunk
            .lines()
            .find_map(|l| l.strip_prefix("Score: "))
            .and_then(|l| l.split_whitespace().next())
            .and_then(|s| s.parse::<f64>().ok());
        let Some(start) = chunk.find(SOLUTION_OPEN) else {
            continue;
        };
        let body = &chunk[start + SOLUTION_OPEN.len()..];
        let Some(end) = body.rfind(SOLUTION_CLOSE) else {
            continue;
        };
        found.push(RenderedCandidate {
            score,
            text: body[..end].trim().to_owned(),
        });
    }
    found
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn template() -> PromptTemplate {
        PromptTemplate {
            general_instructions: "GENERAL".into(),
            problem_definition: "DEFINITION".into(),
            few_shot_examples: vec!["EX-ONE".into(), "EX-TWO".into()],
            task_description: "TASK".into(),
            critic_instructions: "CRITIC".into(),
            author_instructions: "AUTHOR".into(),
            initial_instructions: String::new(),
            strategy_questions: "STRATEGY".into(),
        }
    }

    fn eval(score: f64, lines: &[&str]) -> EvaluationResult {
        EvaluationResult {
            score,
            normalized: score,
            feedback: lines.iter().map(|s| s.to_string()).collect(),
            notes: Vec::new(),
            valid: true,
            solved: false,
        }
    }

    #[test]
    fn initial_prompt_has_no_parent_or_critic_text() {
        let p = build_prompt(&template(), &[], PromptMode::Recombine, &Ablation::default());
        assert!(!p.contains(CANDIDATE_HEADER));
        assert!(!p.contains("CRITIC"));
        assert!(!p.contains("STRATEGY"));
        assert!(p.ends_with("AUTHOR"));
    }

    #[test]
    fn sections_are_ordered() {
        let e = eval(-2.0, &["line one"]);
        let parents = [ParentView { text: "plan", evaluation: &e }];
        let p = build_prompt(&template(), &parents, PromptMode::Refine, &Ablation::default());
        let order = ["GENERAL", "DEFINITION", "EX-ONE", "EX-TWO", "TASK", "plan", "CRITIC", "STRATEGY", "AUTHOR"];
        let positions: Vec<usize> = order.iter().map(|s| p.find(s).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{positions:?}");
    }

    #[test]
    fn parents_feedback_verbatim_and_flags() {
        let a = eval(-1.0, &["Madrid has 7 days instead of 5."]);
        let b = eval(-3.0, &["No direct flight from Riga to Santorini.", "Total is 19 days."]);
        let parents = [
            ParentView { text: "plan A", evaluation: &a },
            ParentView { text: "plan B", evaluation: &b },
        ];
        let all = build_prompt(&template(), &parents, PromptMode::Recombine, &Ablation::default());
        for line in a.feedback.iter().chain(&b.feedback) {
            assert!(all.contains(line.as_str()));
        }

        let quiet = Ablation {
            textual_feedback: false,
            ..Default::default()
        };
        let p = build_prompt(&template(), &parents, PromptMode::Recombine, &quiet);
        for line in a.feedback.iter().chain(&b.feedback) {
            assert!(!p.contains(line.as_str()));
        }
        assert!(p.contains("constraints violated"));

        let no_critic = Ablation {
            critic: false,
            sq_prompts: false,
            ..Default::default()
        };
        let p = build_prompt(&template(), &parents, PromptMode::Recombine, &no_critic);
        assert!(!p.contains("CRITIC") && !p.contains("STRATEGY"));
    }

    #[test]
    fn rendering_is_deterministic_and_recoverable() {
        let e = eval(-2.5, &["x"]);
        let parents = [ParentView { text: "  first plan \n", evaluation: &e }];
        let p1 = build_prompt(&template(), &parents, PromptMode::Refine, &Ablation::default());
        let p2 = build_prompt(&template(), &parents, PromptMode::Refine, &Ablation::default());
        assert_eq!(p1, p2);
        let got = extract_candidates(&p1);
        assert_eq!(got, vec![RenderedCandidate { score: Some(-2.5), text: "first plan".into() }]);
    }

    #[test]
    fn reset_selection_parsing() {
        assert_eq!(parse_reset_selection("Selected: 3, 1, 3, 99, 2", 15, 5), Some(vec![3, 1, 2]));
        assert_eq!(parse_reset_selection("I pick\nSelected: 1 2 3 4 5 6", 15, 5), Some(vec![1, 2, 3, 4, 5]));
        assert_eq!(parse_reset_selection("no idea", 15, 5), None);
        assert_eq!(parse_reset_selection("Selected: 0, 16", 15, 5), None);
    }

    proptest! {
        #[test]
        fn different_parent_sets_render_differently(
            a in proptest::collection::btree_set("[a-z]{3,8}", 1..4),
            b in proptest::collection::btree_set("[a-z]{3,8}", 1..4),
        ) {
            prop_assume!(a != b);
            let e = eval(-1.0, &["f"]);
            let pa: Vec<_> = a.iter().map(|t| ParentView { text: t, evaluation: &e }).collect();
            let pb: Vec<_> = b.iter().map(|t| ParentView { text: t, evaluation: &e }).collect();
            let flags = Ablation::default();
            prop_assert_ne!(
                build_prompt(&template(), &pa, PromptMode::Recombine, &flags),
                build_prompt(&template(), &pb, PromptMode::Recombine, &flags)
            );
        }
    }
}
