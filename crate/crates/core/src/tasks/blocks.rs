//! Locating solution blocks inside free-form generator output.

use crate::llm::prompt::{SOLUTION_CLOSE, SOLUTION_OPEN};

/// Candidate regions of `text` in document order: every
/// `<solution>…</solution>` block if there is one, else every fenced code
/// block, else the whole text. Parsers try them last-first.
pub fn candidate_blocks(text: &str) -> Vec<&str> {
    let tagged = delimited(text, SOLUTION_OPEN, SOLUTION_CLOSE);
    if !tagged.is_empty() {
        return tagged;
    }
    let fenced = fenced_blocks(text);
    if !fenced.is_empty() {
        return fenced;
    }
    vec![text]
}

/// The body of the last `<solution>` block, or the whole text trimmed.
/// This is what prompts show of an earlier candidate.
pub fn solution_text(text: &str) -> &str {
    delimited(text, SOLUTION_OPEN, SOLUTION_CLOSE)
        .pop()
        .unwrap_or(text)
        .trim()
}

/// Bodies between each `open` and the next `close`.
pub fn delimited<'a>(text: &'a str, open: &str, close: &str) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find(open) {
        let body = &rest[start + open.len()..];
        let Some(end) = body.find(close) else { break };
        out.push(&body[..end]);
        rest = &body[end + close.len()..];
    }
    out
}

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        // skip an info string such as ```json
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        let Some(end) = body.find("```") else { break };
        out.push(&body[..end]);
        rest = &body[end + 3..];
    }
    out
}

/// Tries `parse` on each block from last to first and returns the first
/// success, or the error from the last block.
pub fn parse_last<T, E>(text: &str, parse: impl Fn(&str) -> Result<T, E>) -> Result<T, E> {
    let blocks = candidate_blocks(text);
    let mut last_err = None;
    for block in blocks.iter().rev() {
        match parse(block) {
            Ok(v) => return Ok(v),
            Err(e) => {
                if last_err.is_none() {
                    last_err = Some(e);
                }
            }
        }
    }
    Err(last_err.expect("at least one block"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefers_tagged_then_fenced_then_whole() {
        assert_eq!(candidate_blocks("a <solution>x</solution> b <solution>y</solution>"), ["x", "y"]);
        assert_eq!(candidate_blocks("intro\n```json\n[1]\n```\n"), ["[1]\n"]);
        assert_eq!(candidate_blocks("plain"), ["plain"]);
        assert_eq!(candidate_blocks("<solution>unterminated"), ["<solution>unterminated"]);
    }

    #[test]
    fn solution_text_strips_commentary() {
        assert_eq!(solution_text("thoughts\n<solution>\n plan \n</solution>\nbye"), "plan");
        assert_eq!(solution_text("  bare plan "), "bare plan");
    }

    #[test]
    fn last_good_block_wins() {
        let text = "<solution>1</solution><solution>2</solution><solution>zz</solution>";
        assert_eq!(parse_last(text, |b| b.parse::<u8>()), Ok(2));
        assert!(parse_last("<solution>q</solution>", |b| b.parse::<u8>()).is_err());
    }
}
