//! Open-ended baseline: a judge model maps a free-form answer to a label.

use crate::backend::{Backend, BackendError};
use crate::types::{Label, Question};

/// Token budget for the judge's reply.
pub const JUDGE_MAX_TOKENS: usize = 4;
/// Cap on free-form generation from the evaluated model.
pub const OPEN_ENDED_MAX_TOKENS: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error("judge reply {0:?} is not a bare option letter")]
    Unparsed(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// "A) text" lines joined by newlines.
pub fn options_block(q: &Question) -> String {
    q.options()
        .iter()
        .map(|o| format!("{}) {}", o.label, o.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_classifier_prompt(q: &Question, response: &str) -> String {
    format!(
        "Given these possible options:\n{}\n\nAnd this given output:\n{}\n\n\
         Classify the output into one and only one of the aforementioned options.\n\
         Return only the option letter (A, B, C, etc.).",
        options_block(q),
        response
    )
}

/// Accepts exactly `L` or `L)` for a label `L`, after trimming whitespace.
pub fn parse_classifier_reply(reply: &str, labels: &[Label]) -> Result<Label, ExtractionError> {
    let trimmed = reply.trim();
    let letter = trimmed.strip_suffix(')').unwrap_or(trimmed);
    let mut chars = letter.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        if let Some(l) = labels.iter().find(|l| l.as_char() == c) {
            return Ok(*l);
        }
    }
    Err(ExtractionError::Unparsed(reply.to_owned()))
}

pub fn classify_open_ended(judge: &dyn Backend, q: &Question, response: &str) -> Result<Label, ExtractionError> {
    let prompt = build_classifier_prompt(q, response);
    let reply = judge.generate(&prompt, JUDGE_MAX_TOKENS)?;
    parse_classifier_reply(&reply, &q.labels())
}
