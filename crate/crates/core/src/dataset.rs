//! JSONL ingestion.
//!
//! One question per line:
//! `{"id": "...", "stem": "...", "options": ["...", ...], "gold_index": 0}`.
//! Options are labelled A, B, ... by position.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::types::{InvariantError, Question};

const TOY_JSONL: &str = include_str!("../data/toy.jsonl");

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("reading dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed JSON: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: gold_index {gold_index} out of range for {n_options} options")]
    GoldOutOfRange {
        line: usize,
        gold_index: usize,
        n_options: usize,
    },
    #[error("line {line}: need at least 2 options, got {n_options}")]
    TooFewOptions { line: usize, n_options: usize },
    #[error("line {line}: duplicate question id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: InvariantError },
    #[error("dataset is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub stem: String,
    pub options: Vec<String>,
    pub gold_index: usize,
}

impl From<&Question> for QuestionRecord {
    fn from(q: &Question) -> Self {
        Self {
            id: q.id().to_owned(),
            stem: q.stem().to_owned(),
            options: q.options().iter().map(|o| o.text.clone()).collect(),
            gold_index: q.gold_label().index(),
        }
    }
}

fn record_to_question(rec: QuestionRecord, line: usize) -> Result<Question, DatasetError> {
    let n = rec.options.len();
    if n < 2 {
        return Err(DatasetError::TooFewOptions { line, n_options: n });
    }
    if rec.gold_index >= n {
        return Err(DatasetError::GoldOutOfRange {
            line,
            gold_index: rec.gold_index,
            n_options: n,
        });
    }
    Question::from_texts(rec.id, rec.stem, rec.options, rec.gold_index)
        .map_err(|source| DatasetError::Invalid { line, source })
}

/// Parse JSONL from a reader. Blank lines are skipped; line numbers are
/// 1-based.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Question>, DatasetError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QuestionRecord = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let q = record_to_question(rec, line_no)?;
        if !ids.insert(q.id().to_owned()) {
            return Err(DatasetError::DuplicateId {
                line: line_no,
                id: q.id().to_owned(),
            });
        }
        out.push(q);
    }
    Ok(out)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Question>, DatasetError> {
    let file = std::fs::File::open(path)?;
    read_jsonl(std::io::BufReader::new(file))
}

pub fn write_jsonl<W: Write>(questions: &[Question], mut w: W) -> Result<(), DatasetError> {
    for q in questions {
        let line = serde_json::to_string(&QuestionRecord::from(q)).expect("record serializes");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn to_jsonl_string(questions: &[Question]) -> String {
    let mut buf = Vec::new();
    write_jsonl(questions, &mut buf).expect("write to memory");
    String::from_utf8(buf).expect("utf-8 json")
}

/// Twenty fixed general-knowledge questions with 3–4 options each.
pub fn builtin_toy_dataset() -> Vec<Question> {
    read_jsonl(TOY_JSONL.as_bytes()).expect("bundled toy dataset is valid")
}

pub const TOY_DATASET_NAME: &str = "toy";
