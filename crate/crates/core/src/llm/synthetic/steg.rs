use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use super::MutationKernel;
use crate::tasks::steg::{first_mismatch, parse_steg_solution, CipherEntry, StegProblem, StegSolution};

/// Candidate cipher words. None contains another.
const CODE_WORDS: &[&str] = &[
    "rooster", "flowers", "bright", "flames", "cherry", "crimson", "sunset", "ruby", "scarlet", "burning", "meadow",
    "lantern", "harbor", "falcon", "willow", "pebble", "thunder", "violet", "marble", "copper", "orchard", "glacier",
    "canyon", "ember", "saffron", "juniper", "quartz", "beacon", "cobalt", "dragon", "feather", "gravel", "hollow",
    "island", "jasmine", "kettle", "lilac", "mango", "nectar", "oyster", "parrot", "quiver", "raven", "salmon",
    "tulip", "umbrella", "velvet", "walrus", "yonder", "zephyr", "anchor", "biscuit", "candle", "dolphin", "emerald",
];

/// Connective words used between code words. Disjoint from [`CODE_WORDS`].
const FILLER: &[&str] = &[
    "the", "a", "and", "with", "under", "over", "soft", "warm", "light", "we", "walk", "along", "old", "road", "little",
    "green", "hill", "by", "my", "side", "slow", "morning", "cool", "wind", "sings", "through", "tall", "grass", "i",
    "see", "far", "away", "home", "again", "path", "winds", "near", "stream",
];

const LINE_WORDS: usize = 8;

/// Builds ciphers and filler text directly from the target message and
/// repairs or perturbs them word by word.
pub struct StegKernel {
    problem: StegProblem,
}

impl StegKernel {
    pub fn new(problem: StegProblem) -> Self {
        Self { problem }
    }

    fn fresh_word(&self, cipher: &BTreeMap<u32, String>, rng: &mut dyn RngCore) -> Option<String> {
        let unused: Vec<&&str> = CODE_WORDS
            .iter()
            .filter(|w| !cipher.values().any(|v| v.eq_ignore_ascii_case(w)))
            .collect();
        unused.choose(rng).map(|w| (**w).to_owned())
    }

    fn gap(&self, rng: &mut dyn RngCore) -> Vec<String> {
        let n = self.problem.words_between as usize + rng.gen_range(0..=2);
        (0..n).map(|_| (*FILLER.choose(rng).expect("non-empty")).to_owned()).collect()
    }

    fn render(cipher: &BTreeMap<u32, String>, words: &[String]) -> String {
        let text = words
            .chunks(LINE_WORDS)
            .map(|line| line.join(" "))
            .collect::<Vec<_>>()
            .join("\n");
        StegSolution {
            cipher: cipher
                .iter()
                .map(|(&number, word)| CipherEntry {
                    number,
                    word: word.clone(),
                })
                .collect(),
            text,
        }
        .render()
    }

    fn ensure_cipher(&self, cipher: &mut BTreeMap<u32, String>, rng: &mut dyn RngCore) {
        for &n in &self.problem.message {
            if !cipher.contains_key(&n) {
                if let Some(w) = self.fresh_word(cipher, rng) {
                    cipher.insert(n, w);
                }
            }
        }
    }

    /// Index in `words` of the `k`-th code word occurrence, if any.
    fn occurrence(words: &[String], is_code: &dyn Fn(&str) -> bool, k: usize) -> Option<usize> {
        words.iter().enumerate().filter(|(_, w)| is_code(w)).nth(k).map(|(i, _)| i)
    }
}

impl MutationKernel for StegKernel {
    fn sample(&self, rng: &mut dyn RngCore) -> String {
        let mut cipher = BTreeMap::new();
        self.ensure_cipher(&mut cipher, rng);
        let mut words = Vec::new();
        for &n in &self.problem.message {
            let roll: f64 = rng.gen();
            if roll < 0.1 {
                continue;
            }
            words.extend(self.gap(rng));
            let number = if roll < 0.15 {
                *self.problem.message.choose(rng).expect("non-empty")
            } else {
                n
            };
            if let Some(w) = cipher.get(&number) {
                words.push(w.to_uppercase());
            }
        }
        words.extend(self.gap(rng));
        Self::render(&cipher, &words)
    }

    fn mutate(&self, parents: &[&str], rng: &mut dyn RngCore) -> String {
        let Some(Ok(base)) = parents.first().map(|p| parse_steg_solution(p)) else {
            return self.sample(rng);
        };
        let mut cipher: BTreeMap<u32, String> = base.cipher.iter().map(|e| (e.number, e.word.clone())).collect();
        if !base.cipher_issues().is_empty() {
            cipher.clear();
        }
        self.ensure_cipher(&mut cipher, rng);
        let lookup: BTreeMap<String, u32> = cipher.iter().map(|(n, w)| (w.to_lowercase(), *n)).collect();
        let mut words: Vec<String> = base.text.split_whitespace().map(str::to_owned).collect();
        let number_of = |w: &str| -> Option<u32> {
            let bare: String = w.chars().filter(|c| c.is_alphabetic()).collect();
            lookup.get(&bare.to_lowercase()).copied()
        };
        let is_code = |w: &str| number_of(w).is_some();
        let decoded: Vec<u32> = words.iter().filter_map(|w| number_of(w)).collect();
        let m = &self.problem.message;
        let i = first_mismatch(m, &decoded);

        match rng.gen_range(0..10) {
            // targeted repair at the first mismatch
            0..=4 => {
                let at = Self::occurrence(&words, &is_code, i);
                match (m.get(i), at) {
                    (Some(want), Some(pos)) if rng.gen_bool(0.6) => words[pos] = cipher[want].to_uppercase(),
                    (_, Some(pos)) => {
                        words.remove(pos);
                    }
                    (Some(want), None) => {
                        words.extend(self.gap(rng));
                        words.push(cipher[want].to_uppercase());
                    }
                    (None, None) => {}
                }
            }
            // untargeted edits
            5..=6 if !words.is_empty() => {
                let pos = rng.gen_range(0..words.len());
                words.remove(pos);
            }
            7 => {
                let pos = rng.gen_range(0..=words.len());
                let filler = (*FILLER.choose(rng).expect("non-empty")).to_owned();
                words.insert(pos, filler);
            }
            8 => {
                let codes: Vec<usize> = (0..words.len()).filter(|&k| is_code(&words[k])).collect();
                if codes.len() > 1 {
                    let (a, b) = (*codes.choose(rng).expect("len>1"), *codes.choose(rng).expect("len>1"));
                    words.swap(a, b);
                }
            }
            _ => {
                // swap one code word for an unused one
                if let Some(&n) = m.choose(rng) {
                    if let Some(fresh) = self.fresh_word(&cipher, rng) {
                        let old = cipher.insert(n, fresh.clone()).unwrap_or_default();
                        for w in words.iter_mut() {
                            let bare: String = w.chars().filter(|c| c.is_alphabetic()).collect();
                            if bare.eq_ignore_ascii_case(&old) {
                                *w = fresh.to_uppercase();
                            }
                        }
                    }
                }
            }
        }
        Self::render(&cipher, &words)
    }
}
