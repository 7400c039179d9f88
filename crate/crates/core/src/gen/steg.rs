use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tasks::steg::{CipherEntry, StegProblem, StegSolution, MESSAGE_LEN_RANGE, WORDS_BETWEEN_RANGE};

const STYLES: &[&str] = &[
    "a children's rhyme", "a sonnet", "a haiku sequence", "free verse", "a limerick", "a ballad", "an ode",
];

const TOPICS: &[&str] = &[
    "going for a walk", "the sea at night", "a rainy city", "autumn leaves", "a lost cat", "the first snow",
    "an old lighthouse", "a summer market",
];

/// Certificate cipher words: alphabetic, at least four letters, no one
/// contained in another.
const CERT_WORDS: &[&str] = &[
    "amber", "basket", "cinder", "dewdrop", "ermine", "fennel", "gardenia", "heron", "indigo", "jubilee", "kestrel",
    "lagoon", "moss", "nutmeg", "opal", "pumpkin", "quince", "rosebud", "sparrow", "thistle", "upland", "vortex",
    "wheat", "yarrow", "zinnia", "acorn", "bramble", "clover", "driftwood", "fjord",
];

/// Filler words for certificate texts. Never cipher words.
const CERT_FILLER: &[&str] = &["and", "then", "the", "slow", "soft", "we", "go", "on"];

/// Generation knobs for hidden-message instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StegSpec {
    pub message_len: usize,
    pub words_between: u32,
    /// Probability that a position repeats an earlier number.
    pub repetition_rate: f64,
    /// Repeats copy one of this many preceding positions.
    pub repeat_window: usize,
}

impl StegSpec {
    pub fn new(message_len: usize, words_between: u32) -> Self {
        Self {
            message_len,
            words_between,
            repetition_rate: 0.15,
            repeat_window: 12,
        }
    }
}

/// A random message instance. Fresh numbers are distinct multiples of 10;
/// repeats copy a number from the preceding `repeat_window` positions.
pub fn gen_steg_instance(spec: &StegSpec, rng: &mut ChaCha8Rng) -> Result<StegProblem> {
    if !(0.0..=1.0).contains(&spec.repetition_rate) || spec.repeat_window == 0 {
        return Err(Error::InvalidInstance(format!(
            "repetition rate {} / window {} out of range",
            spec.repetition_rate, spec.repeat_window
        )));
    }
    let mut problem = StegProblem {
        message: Vec::new(),
        words_between: spec.words_between,
        style: (*STYLES.choose(rng).expect("non-empty")).to_owned(),
        topic: (*TOPICS.choose(rng).expect("non-empty")).to_owned(),
        inspiration: String::new(),
    };
    // validate bounds before sampling
    problem.message = vec![0; spec.message_len];
    problem.validate()?;

    let mut fresh: Vec<u32> = (1..=99).map(|k| k * 10).collect();
    fresh.shuffle(rng);
    let mut message: Vec<u32> = Vec::with_capacity(spec.message_len);
    for k in 0..spec.message_len {
        if k > 0 && rng.gen_bool(spec.repetition_rate) {
            let lo = k.saturating_sub(spec.repeat_window);
            message.push(message[rng.gen_range(lo..k)]);
        } else {
            message.push(fresh.pop().expect("99 fresh numbers exceed the longest message"));
        }
    }
    problem.message = message;
    Ok(problem)
}

/// A solution built directly from the message: one certificate word per
/// distinct number, separated by exactly `words_between` filler words.
pub fn certificate_solution(problem: &StegProblem) -> StegSolution {
    let mut numbers: Vec<u32> = problem.message.clone();
    numbers.sort_unstable();
    numbers.dedup();
    let cipher: Vec<CipherEntry> = numbers
        .iter()
        .zip(CERT_WORDS)
        .map(|(&number, word)| CipherEntry {
            number,
            word: (*word).to_owned(),
        })
        .collect();
    let word_of = |n: u32| &cipher.iter().find(|e| e.number == n).expect("every number mapped").word;
    let mut words: Vec<&str> = Vec::new();
    for (k, &n) in problem.message.iter().enumerate() {
        if k > 0 {
            for j in 0..problem.words_between as usize {
                words.push(CERT_FILLER[(k + j) % CERT_FILLER.len()]);
            }
        }
        words.push(word_of(n));
    }
    let text = words.chunks(8).map(|l| l.join(" ")).collect::<Vec<_>>().join("\n");
    StegSolution { cipher, text }
}

const _: () = assert!(CERT_WORDS.len() >= *MESSAGE_LEN_RANGE.end());
const _: () = assert!(*WORDS_BETWEEN_RANGE.start() >= 1);
