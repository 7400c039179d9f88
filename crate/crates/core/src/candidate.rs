use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::eval::{EvaluationResult, ParseFailure, Plan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateId(pub u64);

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// Where a candidate was produced. Islands, conversations and turns are
/// 1-based; generation 0 is never used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Birth {
    pub generation: usize,
    pub island: usize,
    pub conversation: usize,
    pub turn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: CandidateId,
    pub raw_text: String,
    pub parsed: Result<Plan, ParseFailure>,
    pub evaluation: EvaluationResult,
    pub lineage: Vec<CandidateId>,
    pub birth: Birth,
}

impl Candidate {
    pub fn score(&self) -> f64 {
        self.evaluation.score
    }

    pub fn solved(&self) -> bool {
        self.evaluation.solved
    }

    pub(crate) fn dedup_key(&self) -> &str {
        self.raw_text.trim()
    }
}

/// Best first; equal scores keep the older candidate ahead.
pub(crate) fn by_rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score()
        .partial_cmp(&a.score())
        .unwrap_or(Ordering::Equal)
        .then(a.id.cmp(&b.id))
}

/// Highest-ranked `n` candidates out of `pool`, cloned.
pub fn top_n<'a>(pool: impl IntoIterator<Item = &'a Candidate>, n: usize) -> Vec<Candidate> {
    let mut all: Vec<&Candidate> = pool.into_iter().collect();
    all.sort_by(|a, b| by_rank(a, b));
    all.into_iter().take(n).cloned().collect()
}

/// One sub-population. Text duplicates (after trimming) are never stored twice.
#[derive(Debug, Clone, Default)]
pub struct Island {
    index: usize,
    population: Vec<Candidate>,
    seen: HashSet<String>,
}

impl Island {
    pub fn new(index: usize) -> Self {
        Self {
            index,
            ..Default::default()
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn population(&self) -> &[Candidate] {
        &self.population
    }

    pub fn len(&self) -> usize {
        self.population.len()
    }

    pub fn is_empty(&self) -> bool {
        self.population.is_empty()
    }

    pub fn contains_text(&self, text: &str) -> bool {
        self.seen.contains(text.trim())
    }

    /// Adds `candidate` unless its text is already present. Returns whether it
    /// was stored.
    pub fn insert(&mut self, candidate: Candidate) -> bool {
        if !self.seen.insert(candidate.dedup_key().to_owned()) {
            return false;
        }
        self.population.push(candidate);
        true
    }

    /// Arithmetic mean of member scores, `None` when empty.
    pub fn mean_score(&self) -> Option<f64> {
        if self.population.is_empty() {
            return None;
        }
        let total: f64 = self.population.iter().map(Candidate::score).sum();
        Some(total / self.population.len() as f64)
    }

    /// Key used to rank islands for reset: empty islands count as -inf.
    pub fn reset_rank_score(&self) -> f64 {
        self.mean_score().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn top(&self, n: usize) -> Vec<Candidate> {
        top_n(&self.population, n)
    }

    /// Drops the whole population and stores `elites` instead.
    pub fn replace_with(&mut self, elites: Vec<Candidate>) {
        self.population.clear();
        self.seen.clear();
        for c in elites {
            self.insert(c);
        }
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::candidate;
    use super::*;

    #[test]
    fn dedup_ignores_surrounding_whitespace() {
        let mut island = Island::new(1);
        assert!(island.insert(candidate(1, "plan a", -1.0)));
        assert!(!island.insert(candidate(2, "  plan a\n", -1.0)));
        assert!(island.insert(candidate(3, "plan b", -3.0)));
        assert_eq!(island.len(), 2);
    }

    #[test]
    fn mean_and_empty_rank() {
        let mut island = Island::new(2);
        assert_eq!(island.mean_score(), None);
        assert_eq!(island.reset_rank_score(), f64::NEG_INFINITY);
        island.insert(candidate(1, "a", -1.0));
        island.insert(candidate(2, "b", -4.0));
        assert_eq!(island.mean_score(), Some(-2.5));
    }

    #[test]
    fn top_orders_by_score_then_age() {
        let mut island = Island::new(1);
        island.insert(candidate(5, "e", -2.0));
        island.insert(candidate(1, "a", -1.0));
        island.insert(candidate(3, "c", -2.0));
        let ids: Vec<u64> = island.top(3).iter().map(|c| c.id.0).collect();
        assert_eq!(ids, vec![1, 3, 5]);
        assert_eq!(island.top(10).len(), 3);
    }
}
