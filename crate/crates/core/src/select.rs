//! Boltzmann tournament selection of conversation parents.

use rand::Rng;

use crate::candidate::Candidate;
use crate::hyper::Hyperparameters;

/// Softmax of `scores / temperature`, computed with the max subtracted.
///
/// Returns an empty vector for empty input. Scores must be finite.
pub fn softmax_weights(scores: &[f64], temperature: f64) -> Vec<f64> {
    let Some(max) = scores.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let exps: Vec<f64> = scores
        .iter()
        .map(|s| ((s - max) / temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Draw one index from an unnormalised weight vector.
fn draw<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if target < *w {
            return i;
        }
        target -= w;
    }
    // Only reachable through rounding at the very top of the range.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Samples `k` distinct indices, each draw proportional to the softmax of
/// the remaining scores.
pub fn sample_without_replacement<R: Rng + ?Sized>(
    scores: &[f64],
    k: usize,
    temperature: f64,
    rng: &mut R,
) -> Vec<usize> {
    if k >= scores.len() {
        return (0..scores.len()).collect();
    }
    let mut weights = softmax_weights(scores, temperature);
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let i = draw(&weights, rng);
        picked.push(i);
        weights[i] = 0.0;
    }
    picked
}

/// Picks the parents for one conversation.
///
/// With probability `pr_no_parents` (and always for an empty population) the
/// conversation starts from scratch. Otherwise the parent count is uniform in
/// `1..=n_parent` and parents are drawn without replacement.
pub fn select_parents<R: Rng + ?Sized>(
    population: &[Candidate],
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Vec<Candidate> {
    if population.is_empty() {
        return Vec::new();
    }
    if rng.gen::<f64>() < hyper.pr_no_parents {
        return Vec::new();
    }
    let k = rng.gen_range(1..=hyper.n_parent.max(1));
    let scores: Vec<f64> = population.iter().map(Candidate::score).collect();
    sample_without_replacement(&scores, k, hyper.selection_temperature, rng)
        .into_iter()
        .map(|i| population[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::candidate::test_support::candidate;

    #[test]
    fn two_point_softmax() {
        let w = softmax_weights(&[0.0, -4.0], 1.0);
        let expected = 1.0 / (1.0 + (-4.0f64).exp());
        assert!((w[0] - expected).abs() < 1e-12);
        assert!((w[0] - 0.982).abs() < 5e-4);
    }

    #[test]
    fn no_parents_when_probability_is_one() {
        let pop = vec![candidate(1, "a", 0.0), candidate(2, "b", -1.0)];
        let hyper = Hyperparameters {
            pr_no_parents: 1.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert!(select_parents(&pop, &hyper, &mut rng).is_empty());
        }
    }

    #[test]
    fn empty_island_yields_no_parents() {
        let hyper = Hyperparameters {
            pr_no_parents: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(select_parents(&[], &hyper, &mut rng).is_empty());
    }

    #[test]
    fn small_population_is_returned_whole() {
        let pop = vec![candidate(1, "a", 0.0), candidate(2, "b", -1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let picked = sample_without_replacement(&[0.0, -1.0], 5, 1.0, &mut rng);
        assert_eq!(picked, vec![0, 1]);
        let hyper = Hyperparameters {
            pr_no_parents: 0.0,
            n_parent: 5,
            ..Default::default()
        };
        for _ in 0..50 {
            let parents = select_parents(&pop, &hyper, &mut rng);
            assert!(!parents.is_empty() && parents.len() <= 2);
            assert!(parents.len() < 2 || parents[0].id != parents[1].id);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_a_probability_vector(
            scores in proptest::collection::vec(-1e6f64..1e6, 1..40),
            temperature in 0.01f64..100.0,
        ) {
            let w = softmax_weights(&scores, temperature);
            prop_assert_eq!(w.len(), scores.len());
            prop_assert!(w.iter().all(|p| *p >= 0.0 && p.is_finite()));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn draws_are_distinct(
            scores in proptest::collection::vec(-50f64..0.0, 1..20),
            k in 1usize..25,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picked = sample_without_replacement(&scores, k, 1.0, &mut rng);
            prop_assert_eq!(picked.len(), k.min(scores.len()));
            let mut sorted = picked.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), picked.len());
        }
    }
}
