//! Hidden-message poems: a number-to-word cipher plus a text whose cipher
//! words, read in order, spell out the target number sequence.
//!
//! Fitness is `i + f`, where `i` is the length of the common prefix of the
//! target `M` and the decoded `M′`, and `f = 1 − lev(M, M′)/max(|M|, |M′|, 1)`
//! clamped into the open unit interval. It is maximal exactly when
//! `M′ = M`. Invalid solutions get fitness −1.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::blocks::delimited;
use super::conversation_template;
use super::levenshtein::levenshtein;
use crate::error::{Error, Result};
use crate::eval::{wrong_plan_kind, EvaluationResult, ParseFailure, Plan, Task, TaskKind};
use crate::llm::prompt::PromptTemplate;

pub const CIPHER_START: &str = "<ENCODING-CIPHER START>";
pub const CIPHER_END: &str = "<ENCODING-CIPHER END>";
pub const TEXT_START: &str = "<POEM START>";
pub const TEXT_END: &str = "<POEM END>";

pub const MIN_WORD_LEN: usize = 4;
pub const INVALID_FITNESS: f64 = -1.0;
const F_EPS: f64 = 1e-6;

pub const MESSAGE_LEN_RANGE: std::ops::RangeInclusive<usize> = 10..=30;
pub const WORDS_BETWEEN_RANGE: std::ops::RangeInclusive<u32> = 3..=7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StegProblem {
    pub message: Vec<u32>,
    /// Target number of words between successive cipher words.
    pub words_between: u32,
    pub style: String,
    pub topic: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub inspiration: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CipherEntry {
    pub number: u32,
    pub word: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StegSolution {
    pub cipher: Vec<CipherEntry>,
    pub text: String,
}

/// An alphabetic run in the text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Byte range in the text.
    pub span: std::ops::Range<usize>,
    /// Index of the whitespace-separated word containing the run.
    pub word_index: usize,
    pub number: Option<u32>,
}

impl StegSolution {
    pub fn render(&self) -> String {
        let mut s = format!("{CIPHER_START}\n");
        for e in &self.cipher {
            s.push_str(&format!("{} : {};\n", e.number, e.word));
        }
        s.push_str(&format!("{CIPHER_END}\n\n{TEXT_START}\n{}\n{TEXT_END}", self.text.trim()));
        s
    }

    /// Cipher rule violations; empty when the cipher is usable. Independent
    /// of the text.
    pub fn cipher_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let folded: Vec<String> = self.cipher.iter().map(|e| e.word.to_lowercase()).collect();
        for e in &self.cipher {
            if !e.word.chars().all(char::is_alphabetic) {
                issues.push(format!("Cipher word '{}' for {} must contain letters only.", e.word, e.number));
            }
            if e.word.chars().count() < MIN_WORD_LEN {
                issues.push(format!(
                    "Cipher word '{}' for {} is shorter than {MIN_WORD_LEN} letters.",
                    e.word, e.number
                ));
            }
        }
        for i in 0..folded.len() {
            for j in i + 1..folded.len() {
                let (a, b) = (&folded[i], &folded[j]);
                if a == b {
                    issues.push(format!(
                        "The word '{}' is used for both {} and {}; cipher words must be distinct.",
                        self.cipher[i].word, self.cipher[i].number, self.cipher[j].number
                    ));
                } else if a.contains(b.as_str()) || b.contains(a.as_str()) {
                    let (inner, outer) = if a.len() < b.len() { (i, j) } else { (j, i) };
                    issues.push(format!(
                        "Cipher word '{}' is contained in '{}'; cipher words cannot contain each other.",
                        self.cipher[inner].word, self.cipher[outer].word
                    ));
                }
            }
        }
        issues
    }

    /// Alphabetic runs of the text, matched case-insensitively against the
    /// cipher.
    pub fn tokens(&self) -> Vec<Token> {
        let lookup: HashMap<String, u32> =
            self.cipher.iter().map(|e| (e.word.to_lowercase(), e.number)).collect();
        let mut out = Vec::new();
        let text = &self.text;
        let close = |start: usize, end: usize, word_index: usize, out: &mut Vec<Token>| {
            let number = lookup.get(&text[start..end].to_lowercase()).copied();
            out.push(Token {
                span: start..end,
                word_index,
                number,
            });
        };
        let mut word_index = 0usize;
        let mut in_word = false;
        let mut run_start: Option<usize> = None;
        for (i, c) in text.char_indices() {
            if c.is_alphabetic() {
                run_start.get_or_insert(i);
            } else if let Some(start) = run_start.take() {
                close(start, i, word_index, &mut out);
            }
            if c.is_whitespace() {
                word_index += usize::from(in_word);
                in_word = false;
            } else {
                in_word = true;
            }
        }
        if let Some(start) = run_start {
            close(start, text.len(), word_index, &mut out);
        }
        out
    }

    pub fn decode(&self) -> Vec<u32> {
        self.tokens().iter().filter_map(|t| t.number).collect()
    }
}

/// Common-prefix length of `a` and `b`.
pub fn first_mismatch(a: &[u32], b: &[u32]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

pub fn fitness(target: &[u32], decoded: &[u32]) -> f64 {
    let i = first_mismatch(target, decoded);
    let norm = target.len().max(decoded.len()).max(1) as f64;
    let f = (1.0 - levenshtein(target, decoded) as f64 / norm).clamp(F_EPS, 1.0 - F_EPS);
    i as f64 + f
}

/// Mean number of words between successive cipher-word occurrences, or
/// `None` with fewer than two occurrences.
pub fn mean_gap(tokens: &[Token]) -> Option<f64> {
    let positions: Vec<usize> = tokens.iter().filter(|t| t.number.is_some()).map(|t| t.word_index).collect();
    if positions.len() < 2 {
        return None;
    }
    let total: usize = positions.windows(2).map(|w| (w[1] - w[0]).saturating_sub(1)).sum();
    Some(total as f64 / (positions.len() - 1) as f64)
}

fn list(nums: &[u32]) -> String {
    let parts: Vec<String> = nums.iter().map(u32::to_string).collect();
    format!("[{}]", parts.join(", "))
}

fn times(n: usize) -> String {
    if n == 1 {
        "1 time".to_owned()
    } else {
        format!("{n} times")
    }
}

impl StegProblem {
    pub fn validate(&self) -> Result<()> {
        if !MESSAGE_LEN_RANGE.contains(&self.message.len()) {
            return Err(Error::InvalidInstance(format!(
                "message length {} outside {MESSAGE_LEN_RANGE:?}",
                self.message.len()
            )));
        }
        if !WORDS_BETWEEN_RANGE.contains(&self.words_between) {
            return Err(Error::InvalidInstance(format!(
                "words between {} outside {WORDS_BETWEEN_RANGE:?}",
                self.words_between
            )));
        }
        Ok(())
    }

    pub fn max_fitness(&self) -> f64 {
        self.message.len() as f64 + 1.0
    }

    /// Required mean gap, one less than the target to allow for phrasing.
    pub fn required_gap(&self) -> f64 {
        f64::from(self.words_between.saturating_sub(1))
    }

    fn invalid(&self, feedback: Vec<String>) -> EvaluationResult {
        EvaluationResult {
            score: INVALID_FITNESS,
            normalized: INVALID_FITNESS - self.max_fitness(),
            feedback,
            notes: Vec::new(),
            valid: false,
            solved: false,
        }
    }

    pub fn evaluate_solution(&self, sol: &StegSolution) -> EvaluationResult {
        let issues = sol.cipher_issues();
        if !issues.is_empty() {
            return self.invalid(issues);
        }
        let m = &self.message;
        let tokens = sol.tokens();
        let decoded: Vec<u32> = tokens.iter().filter_map(|t| t.number).collect();
        let fit = fitness(m, &decoded);
        let i = first_mismatch(m, &decoded);
        let gap = mean_gap(&tokens);
        let gap_ok = gap.is_none_or(|g| g >= self.required_gap());
        let exact = decoded == *m;

        let mut feedback = Vec::new();
        let notes = vec![format!("Decoded message: {}.", list(&decoded))];

        let mapped: BTreeMap<u32, &str> = sol.cipher.iter().map(|e| (e.number, e.word.as_str())).collect();
        let mut missing: Vec<u32> = m.iter().copied().filter(|n| !mapped.contains_key(n)).collect();
        missing.sort_unstable();
        missing.dedup();
        if !missing.is_empty() {
            feedback.push(format!("The cipher has no word for {}.", list(&missing)));
        }
        let extra: Vec<u32> = mapped.keys().copied().filter(|n| !m.contains(n)).collect();
        if !extra.is_empty() {
            feedback.push(format!("The cipher maps numbers that are not in the message: {}.", list(&extra)));
        }

        let count = |seq: &[u32], n: u32| seq.iter().filter(|&&x| x == n).count();
        for (&n, word) in &mapped {
            let (want, got) = (count(m, n), count(&decoded, n));
            if want != got {
                feedback.push(format!(
                    "'{word}' ({n}) should appear {} but appears {}.",
                    times(want),
                    times(got)
                ));
            }
        }

        if !exact {
            feedback.push(format!(
                "Annotated text (cipher words in asterisks):\n{}",
                annotate(&sol.text, &tokens, m, i)
            ));
        }
        if decoded.len() > m.len() && i == m.len() {
            feedback.push(format!(
                "The text also encodes extra words after the full message: {}.",
                list(&decoded[m.len()..])
            ));
        }
        if decoded.len() < m.len() {
            feedback.push(format!(
                "The decoded message is too short: {} of {} numbers.",
                decoded.len(),
                m.len()
            ));
        }
        if exact && !gap_ok {
            feedback.push(format!(
                "Cipher words are too close together: {:.1} words between them on average, at least {} needed.",
                gap.unwrap_or(0.0),
                self.required_gap()
            ));
        }

        EvaluationResult {
            score: fit,
            normalized: fit - self.max_fitness(),
            feedback,
            notes,
            valid: true,
            solved: exact && gap_ok,
        }
    }

    pub fn describe(&self) -> String {
        let mut s = format!(
            "Message To Encode (M): {}\nStyle: {}\n",
            self.message.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
            self.style
        );
        if !self.inspiration.is_empty() {
            s.push_str(&format!("Inspiration: {}\n", self.inspiration));
        }
        s.push_str(&format!(
            "Words Between (B): {}\nTopic: \"{}\"\n\nEncode M in a {} about \"{}\". The cipher words must appear in the text \
             in exactly the order of M, each occurrence encoding one number, with about {} other words between successive \
             cipher words (on average at least {}). Cipher words must not appear anywhere else in the text.",
            self.words_between,
            self.topic,
            self.style.to_lowercase(),
            self.topic,
            self.words_between,
            self.required_gap()
        ));
        s
    }
}

/// Text with cipher words wrapped in asterisks and the first wrong (or
/// missing) number marked.
fn annotate(text: &str, tokens: &[Token], target: &[u32], mismatch: usize) -> String {
    let mut out = String::with_capacity(text.len() + 64);
    let mut cursor = 0;
    let mut marked = false;
    for (seen, t) in tokens.iter().filter(|t| t.number.is_some()).enumerate() {
        out.push_str(&text[cursor..t.span.start]);
        out.push('*');
        out.push_str(&text[t.span.clone()]);
        out.push('*');
        if seen == mismatch {
            match target.get(mismatch) {
                Some(want) => out.push_str(&format!("[<- first error: expected {want}]")),
                None => out.push_str("[<- first error: message already complete]"),
            }
            marked = true;
        }
        cursor = t.span.end;
    }
    out.push_str(&text[cursor..]);
    if !marked {
        if let Some(want) = target.get(mismatch) {
            out.push_str(&format!(" [<- first error: text ends, expected {want} next]"));
        }
    }
    out
}

fn parse_cipher(block: &str) -> std::result::Result<Vec<CipherEntry>, ParseFailure> {
    let unquote = |s: &str| s.trim().trim_matches(|c| c == '"' || c == '\'').trim().to_owned();
    let mut entries: Vec<CipherEntry> = Vec::new();
    for raw in block.split([';', '\n']) {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let (num, word) = raw
            .split_once(':')
            .ok_or_else(|| ParseFailure::new(format!("cipher entry `{raw}` is not `number : word`")))?;
        let number: u32 = unquote(num)
            .parse()
            .map_err(|_| ParseFailure::new(format!("cipher key `{}` is not a number", num.trim())))?;
        let word = unquote(word);
        if word.is_empty() {
            return Err(ParseFailure::new(format!("cipher entry for {number} has no word")));
        }
        if entries.iter().any(|e| e.number == number) {
            return Err(ParseFailure::new(format!("cipher lists {number} more than once")));
        }
        entries.push(CipherEntry { number, word });
    }
    if entries.is_empty() {
        return Err(ParseFailure::new("the cipher is empty"));
    }
    Ok(entries)
}

/// Reads the last cipher block and the last text block.
pub fn parse_steg_solution(raw: &str) -> std::result::Result<StegSolution, ParseFailure> {
    let cipher = delimited(raw, CIPHER_START, CIPHER_END)
        .pop()
        .ok_or_else(|| ParseFailure::new(format!("missing {CIPHER_START} ... {CIPHER_END} block")))?;
    let text = delimited(raw, TEXT_START, TEXT_END)
        .pop()
        .ok_or_else(|| ParseFailure::new(format!("missing {TEXT_START} ... {TEXT_END} block")))?;
    Ok(StegSolution {
        cipher: parse_cipher(cipher)?,
        text: text.trim().to_owned(),
    })
}

const GENERAL: &str = "You are a skilled poet and puzzle designer. You will hide a sequence of numbers inside a piece of \
writing using a secret number-to-word cipher, while keeping the writing natural.";

const DEFINITION: &str = "Choose one code word for every distinct number in the message. Code words must be distinct, at \
least 4 letters long, letters only, and no code word may contain another (ignoring capitalization). Reading the text from \
start to end and writing down the number of every code word you meet (ignoring capitalization and punctuation) must give \
exactly the message: no missing, extra or reordered numbers. Code words must not appear in the text except where they \
encode a number.";

const EXAMPLE: &str = "Message To Encode (M): 7,3,7\nStyle: Haiku\nWords Between (B): 3\nTopic: \"Rain\"\n\n\
<ENCODING-CIPHER START>\n7 : clouds;\n3 : river;\n<ENCODING-CIPHER END>\n\n<POEM START>\nGrey clouds gather low,\n\
soft rain swells the river bend,\nand the clouds move on.\n<POEM END>";

const STRATEGY: &str = "Hints for the critic: Where does the decoded message first differ from the target, and which word \
causes it? Do any code words appear by accident, for example inside a longer phrase? Is every number of the message \
encoded the right number of times? Are code words spread out enough, or are some crowded together? Would a different code \
word make a line easier to write?";

const AUTHOR_FORMAT: &str = "Inside <solution> and </solution> tags, write the cipher between <ENCODING-CIPHER START> and \
<ENCODING-CIPHER END> as lines of the form `number : word;`, then the text between <POEM START> and <POEM END>.";

impl Task for StegProblem {
    fn kind(&self) -> TaskKind {
        TaskKind::Steg
    }

    fn prompt_template(&self) -> PromptTemplate {
        conversation_template(GENERAL, DEFINITION, &[EXAMPLE], &self.describe(), STRATEGY, AUTHOR_FORMAT)
    }

    fn parse(&self, raw: &str) -> std::result::Result<Plan, ParseFailure> {
        parse_steg_solution(raw).map(Plan::Steg)
    }

    fn evaluate(&self, plan: &Plan) -> EvaluationResult {
        match plan {
            Plan::Steg(s) => self.evaluate_solution(s),
            _ => wrong_plan_kind(TaskKind::Steg, -INVALID_FITNESS, self.max_fitness()),
        }
    }

    fn format_failure(&self, failure: &ParseFailure) -> EvaluationResult {
        self.invalid(vec![format!("The solution could not be read: {failure}.")])
    }
}
