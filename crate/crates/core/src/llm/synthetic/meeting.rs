use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use super::MutationKernel;
use crate::tasks::meeting::{parse_meeting_plan, MeetingProblem};

/// Chance that a friend is included in a freshly sampled plan.
const INCLUDE: f64 = 0.7;

/// Edits which friends are met and in what order, then re-renders the plan
/// with earliest timing.
pub struct MeetingKernel {
    problem: MeetingProblem,
}

impl MeetingKernel {
    pub fn new(problem: MeetingProblem) -> Self {
        Self { problem }
    }

    fn order_of(&self, text: &str) -> Option<Vec<String>> {
        let plan = parse_meeting_plan(text).ok()?;
        let mut order: Vec<String> = Vec::new();
        for step in &plan.steps {
            let Some(rest) = step.split_once("meet ").map(|(_, r)| r) else { continue };
            let name = rest.split_once(" for").map_or(rest, |(n, _)| n).trim();
            if self.problem.friend_schedules.contains_key(name) && !order.iter().any(|o| o == name) {
                order.push(name.to_owned());
            }
        }
        Some(order)
    }

    fn render(&self, order: &[String]) -> String {
        let view: Vec<&str> = order.iter().map(String::as_str).collect();
        self.problem.schedule(&view).render()
    }
}

impl MutationKernel for MeetingKernel {
    fn sample(&self, rng: &mut dyn RngCore) -> String {
        let mut order: Vec<String> = self
            .problem
            .friend_schedules
            .keys()
            .filter(|_| rng.gen_bool(INCLUDE))
            .cloned()
            .collect();
        order.shuffle(rng);
        self.render(&order)
    }

    fn mutate(&self, parents: &[&str], rng: &mut dyn RngCore) -> String {
        let Some(mut order) = parents.first().and_then(|p| self.order_of(p)) else {
            return self.sample(rng);
        };
        let missing: Vec<&String> = self
            .problem
            .friend_schedules
            .keys()
            .filter(|k| !order.contains(k))
            .collect();
        let n = order.len();
        match rng.gen_range(0..10) {
            0..=3 if !missing.is_empty() => {
                let who = missing.choose(rng).expect("non-empty");
                order.insert(rng.gen_range(0..=n), (*who).clone());
            }
            4..=5 if n > 0 => {
                order.remove(rng.gen_range(0..n));
            }
            6..=7 if n > 1 => {
                let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                order.swap(a, b);
            }
            _ if n > 1 => {
                let from = rng.gen_range(0..n);
                let item = order.remove(from);
                order.insert(rng.gen_range(0..n), item);
            }
            _ => {
                if let Some(who) = missing.choose(rng) {
                    order.push((*who).clone());
                }
            }
        }
        self.render(&order)
    }
}
