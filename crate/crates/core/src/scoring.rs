//! First-token scoring: label matching, restricted option mass, and the
//! full-vocabulary judgment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::{FirstTokenOutcome, GenerationTrace, Label, Question, TokenCandidate};

/// How candidate surfaces contribute mass to an option.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceMode {
    /// Sum every surface that matches the label ("A", " A", "\nA", ...).
    #[default]
    Aggregate,
    /// Only the bare label surface counts.
    StrictSingle,
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("trace for question {0} has no positions")]
    EmptyTrace(String),
}

/// A token is a valid answer when it is exactly one label, optionally
/// preceded by up to two spaces or newlines.
pub fn match_valid_label(token_text: &str, labels: &[Label]) -> Option<Label> {
    let mut rest = token_text;
    for _ in 0..2 {
        match rest.strip_prefix([' ', '\n']) {
            Some(r) => rest = r,
            None => break,
        }
    }
    let mut chars = rest.chars();
    let (Some(c), None) = (chars.next(), chars.next()) else {
        return None;
    };
    labels.iter().copied().find(|l| l.as_char() == c)
}

fn surface_label(token_text: &str, labels: &[Label], mode: SurfaceMode) -> Option<Label> {
    match mode {
        SurfaceMode::Aggregate => match_valid_label(token_text, labels),
        SurfaceMode::StrictSingle => {
            let mut chars = token_text.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => labels.iter().copied().find(|l| l.as_char() == c),
                _ => None,
            }
        }
    }
}

/// Probability mass per label read off one position's candidates. Labels
/// without a matching candidate get zero.
pub fn option_probabilities(
    first_position: &[TokenCandidate],
    labels: &[Label],
    mode: SurfaceMode,
) -> BTreeMap<Label, f64> {
    let mut probs: BTreeMap<Label, f64> = labels.iter().map(|&l| (l, 0.0)).collect();
    for cand in first_position {
        if let Some(l) = surface_label(cand.token_text(), labels, mode) {
            *probs.get_mut(&l).expect("label present") += cand.prob();
        }
    }
    probs
}

/// Restricted argmax over option mass. Ties go to the alphabetically
/// smallest label; the flag is set when every option has zero mass.
///
/// Panics on an empty map.
pub fn ftp_select(option_probs: &BTreeMap<Label, f64>) -> (Label, bool) {
    let mut iter = option_probs.iter();
    let (&first, &first_p) = iter.next().expect("at least one option");
    let (best, best_p) = iter.fold(
        (first, first_p),
        |(bl, bp), (&l, &p)| {
            if p > bp {
                (l, p)
            } else {
                (bl, bp)
            }
        },
    );
    (best, best_p <= 0.0)
}

/// Score one trace against its question.
pub fn full_vocab_outcome(
    trace: &GenerationTrace,
    q: &Question,
    mode: SurfaceMode,
) -> Result<FirstTokenOutcome, ScoreError> {
    let greedy = trace.greedy_tokens();
    let top1 = greedy
        .first()
        .ok_or_else(|| ScoreError::EmptyTrace(q.id().to_owned()))?;
    let labels = q.labels();
    let matched = match_valid_label(top1, &labels);
    let second_token = match matched {
        Some(_) => greedy.get(1).cloned(),
        None => None,
    };
    let option_probs = option_probabilities(trace.first_position(), &labels, mode);
    let (choice, degenerate) = ftp_select(&option_probs);
    Ok(FirstTokenOutcome {
        question_id: q.id().to_owned(),
        top1_token: top1.clone(),
        is_valid: matched.is_some(),
        matched_label: matched,
        second_token,
        option_probs,
        restricted_choice: choice,
        gold_label: q.gold_label(),
        degenerate,
    })
}
