//! Task evaluators: trip itineraries, meeting schedules and hidden-message
//! poems, plus the helpers they share.

pub mod blocks;
pub mod clock;
pub mod levenshtein;
pub mod meeting;
pub mod steg;
pub mod trip;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::eval::{Task, TaskKind};
use crate::llm::prompt::PromptTemplate;

pub use meeting::MeetingProblem;
pub use steg::StegProblem;
pub use trip::TripProblem;

const CRITIC: &str = "First, act as a critic. For each candidate solution above, read its evaluation feedback and explain \
which constraints it breaks and why. Note what the better candidates get right. Then propose concrete changes that would \
fix every problem without introducing new ones.";

const AUTHOR: &str = "Then, act as the author. Taking the critic's analysis into account, write one complete, improved \
solution to the task.";

const AUTHOR_INITIAL: &str = "Think through the constraints step by step, then write one complete solution to the task.";

/// Assembles a template from the task-specific pieces and the shared
/// critic/author instructions.
pub(crate) fn conversation_template(
    general: &str,
    definition: &str,
    examples: &[&str],
    task: &str,
    strategy: &str,
    output_format: &str,
) -> PromptTemplate {
    PromptTemplate {
        general_instructions: general.to_owned(),
        problem_definition: definition.to_owned(),
        few_shot_examples: examples.iter().map(|s| (*s).to_owned()).collect(),
        task_description: format!("Now solve this task.\n\n{task}"),
        critic_instructions: CRITIC.to_owned(),
        author_instructions: format!("{AUTHOR} {output_format}"),
        initial_instructions: format!("{AUTHOR_INITIAL} {output_format}"),
        strategy_questions: strategy.to_owned(),
    }
}

/// A problem instance of any supported task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "problem", rename_all = "kebab-case")]
pub enum Problem {
    Trip(TripProblem),
    Meeting(MeetingProblem),
    Steg(StegProblem),
}

impl Problem {
    pub fn kind(&self) -> TaskKind {
        match self {
            Problem::Trip(_) => TaskKind::Trip,
            Problem::Meeting(_) => TaskKind::Meeting,
            Problem::Steg(_) => TaskKind::Steg,
        }
    }

    pub fn task(&self) -> Arc<dyn Task> {
        match self {
            Problem::Trip(p) => Arc::new(p.clone()),
            Problem::Meeting(p) => Arc::new(p.clone()),
            Problem::Steg(p) => Arc::new(p.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyper::Ablation;
    use crate::llm::prompt::{build_prompt, PromptMode};

    #[test]
    fn fixtures_round_trip_through_serde() {
        for text in [
            include_str!("../../tests/fixtures/five_city_trip.json"),
            include_str!("../../tests/fixtures/five_friend_meeting.json"),
            include_str!("../../tests/fixtures/walking_poem_problem.json"),
        ] {
            let p: Problem = serde_json::from_str(text).unwrap();
            let again: Problem = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
            assert_eq!(p, again);
        }
    }

    #[test]
    fn templates_carry_the_instance() {
        let p: Problem = serde_json::from_str(include_str!("../../tests/fixtures/five_city_trip.json")).unwrap();
        let t = p.task().prompt_template();
        assert!(t.task_description.contains("16 days"));
        assert!(t.author_instructions.contains("<solution>"));
        let prompt = build_prompt(&t, &[], PromptMode::Recombine, &Ablation::default());
        assert!(prompt.contains("Madrid"));
        assert!(prompt.contains("City (Day a-b)"));
        assert!(!prompt.contains("critic"));
    }
}
