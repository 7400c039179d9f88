use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use super::MutationKernel;
use crate::tasks::trip::{parse_itinerary, TripItinerary, TripProblem};

/// Chance that a freshly chosen stay length is the required one.
const CORRECT_STAY: f64 = 0.7;

/// Edits city orders and stay lengths; days are always laid out back to back
/// from day 1.
pub struct TripKernel {
    problem: TripProblem,
}

impl TripKernel {
    pub fn new(problem: TripProblem) -> Self {
        Self { problem }
    }

    fn stay(&self, city: &str, rng: &mut dyn RngCore) -> u32 {
        let required = self.problem.required_stay.get(city).copied().unwrap_or(2);
        if rng.gen_bool(CORRECT_STAY) {
            required
        } else if required > 1 && rng.gen_bool(0.5) {
            required - 1
        } else {
            required + 1
        }
    }

    /// Drops unknown and repeated cities and appends missing ones.
    fn repair(&self, order: &mut Vec<(String, u32)>, rng: &mut dyn RngCore) {
        let mut seen = std::collections::HashSet::new();
        order.retain(|(c, _)| self.problem.required_stay.contains_key(c) && seen.insert(c.clone()));
        let missing: Vec<String> = self
            .problem
            .required_stay
            .keys()
            .filter(|c| !seen.contains(*c))
            .cloned()
            .collect();
        for city in missing {
            let stay = self.stay(&city, rng);
            let at = rng.gen_range(0..=order.len());
            order.insert(at, (city, stay));
        }
    }

    fn edit(&self, order: &mut [(String, u32)], rng: &mut dyn RngCore) {
        let n = order.len();
        if n == 0 {
            return;
        }
        match rng.gen_range(0..10) {
            0..=3 if n > 1 => {
                let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
                order.swap(a, b);
            }
            4..=6 if n > 1 => {
                let from = rng.gen_range(0..n);
                let to = rng.gen_range(0..n);
                if from < to {
                    order[from..=to].rotate_left(1);
                } else {
                    order[to..=from].rotate_right(1);
                }
            }
            _ => {
                let i = rng.gen_range(0..n);
                order[i].1 = self.stay(&order[i].0, rng);
            }
        }
    }

    fn render(order: &[(String, u32)]) -> String {
        let view: Vec<(&str, u32)> = order.iter().map(|(c, d)| (c.as_str(), *d)).collect();
        TripItinerary::from_order(&view).render()
    }
}

impl MutationKernel for TripKernel {
    fn sample(&self, rng: &mut dyn RngCore) -> String {
        let mut cities: Vec<&String> = self.problem.required_stay.keys().collect();
        cities.shuffle(rng);
        let order: Vec<(String, u32)> = cities.into_iter().map(|c| (c.clone(), self.stay(c, rng))).collect();
        Self::render(&order)
    }

    fn mutate(&self, parents: &[&str], rng: &mut dyn RngCore) -> String {
        let Some(Ok(base)) = parents.first().map(|p| parse_itinerary(p)) else {
            return self.sample(rng);
        };
        let mut order: Vec<(String, u32)> = base.segments.iter().map(|s| (s.city.clone(), s.days())).collect();
        self.repair(&mut order, rng);
        let edits = if rng.gen_bool(0.3) { 2 } else { 1 };
        for _ in 0..edits {
            self.edit(&mut order, rng);
        }
        Self::render(&order)
    }
}
