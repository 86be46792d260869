use std::cmp::Ordering;
use std::io::BufRead;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::token::{detokenize, tokenize, Token};

/// One candidate answer in context, with the QA system's score and the
/// answer's offsets in the (unseen) source page.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub left: Vec<Token>,
    pub answer: Vec<Token>,
    pub right: Vec<Token>,
    pub score: f64,
    pub span_start: u64,
    pub span_end: u64,
}

impl Observation {
    pub fn answer_text(&self) -> String {
        detokenize(&self.answer)
    }
}

/// A question together with the QA system's M-best list, sorted by score
/// descending (ties go to the earlier span).
#[derive(Debug, Clone, PartialEq)]
pub struct MBestRecord {
    pub question_id: String,
    pub question: Vec<Token>,
    pub title: Vec<Token>,
    pub candidates: Vec<Observation>,
    pub qa_threshold_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordErrorKind {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("empty M-best list")]
    EmptyMBest,
    #[error("empty question id")]
    EmptyQuestionId,
    #[error("candidate {0}: score is not finite")]
    NonFiniteScore(usize),
    #[error("candidate {index}: span end {end} precedes start {start}")]
    InvalidSpan { index: usize, start: u64, end: u64 },
    #[error("candidate {0}: empty answer")]
    EmptyAnswer(usize),
    #[error("qa_threshold_score is not finite")]
    NonFiniteThreshold,
}

/// A rejected input line. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct RecordError {
    pub line: usize,
    pub kind: RecordErrorKind,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireCandidate {
    left: String,
    answer: String,
    right: String,
    score: f64,
    start: u64,
    end: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    qid: String,
    question: String,
    title: String,
    candidates: Vec<WireCandidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qa_threshold_score: Option<f64>,
}

/// Candidate ordering: score descending, then earlier span first.
pub fn candidate_order(a: &Observation, b: &Observation) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.span_start.cmp(&b.span_start))
}

impl MBestRecord {
    /// Validates and sorts. Used by the parser and by generators that build
    /// records in memory.
    pub fn new(
        question_id: String,
        question: Vec<Token>,
        title: Vec<Token>,
        mut candidates: Vec<Observation>,
        qa_threshold_score: Option<f64>,
    ) -> Result<Self, RecordErrorKind> {
        if question_id.is_empty() {
            return Err(RecordErrorKind::EmptyQuestionId);
        }
        if candidates.is_empty() {
            return Err(RecordErrorKind::EmptyMBest);
        }
        for (i, c) in candidates.iter().enumerate() {
            if !c.score.is_finite() {
                return Err(RecordErrorKind::NonFiniteScore(i));
            }
            if c.span_end < c.span_start {
                return Err(RecordErrorKind::InvalidSpan { index: i, start: c.span_start, end: c.span_end });
            }
            if c.answer.is_empty() {
                return Err(RecordErrorKind::EmptyAnswer(i));
            }
        }
        if qa_threshold_score.is_some_and(|s| !s.is_finite()) {
            return Err(RecordErrorKind::NonFiniteThreshold);
        }
        candidates.sort_by(candidate_order);
        Ok(MBestRecord { question_id, question, title, candidates, qa_threshold_score })
    }

    pub fn m(&self) -> usize {
        self.candidates.len()
    }

    /// Keeps the top `m` candidates.
    pub fn truncated(&self, m: usize) -> MBestRecord {
        let mut r = self.clone();
        r.candidates.truncate(m.max(1));
        r
    }

    pub fn to_json_line(&self) -> String {
        let wire = WireRecord {
            qid: self.question_id.clone(),
            question: detokenize(&self.question),
            title: detokenize(&self.title),
            candidates: self
                .candidates
                .iter()
                .map(|c| WireCandidate {
                    left: detokenize(&c.left),
                    answer: detokenize(&c.answer),
                    right: detokenize(&c.right),
                    score: c.score,
                    start: c.span_start,
                    end: c.span_end,
                })
                .collect(),
            qa_threshold_score: self.qa_threshold_score,
        };
        serde_json::to_string(&wire).expect("record serializes")
    }
}

/// Parses one JSONL line. `line_no` is only used for diagnostics.
pub fn parse_mbest_record(line: &str, line_no: usize) -> Result<MBestRecord, RecordError> {
    let err = |kind| RecordError { line: line_no, kind };
    let wire: WireRecord = serde_json::from_str(line).map_err(|e| err(RecordErrorKind::Json(e.to_string())))?;
    let candidates = wire
        .candidates
        .into_iter()
        .map(|c| Observation {
            left: tokenize(&c.left),
            answer: tokenize(&c.answer),
            right: tokenize(&c.right),
            score: c.score,
            span_start: c.start,
            span_end: c.end,
        })
        .collect();
    MBestRecord::new(wire.qid, tokenize(&wire.question), tokenize(&wire.title), candidates, wire.qa_threshold_score)
        .map_err(err)
}

/// Reads a whole JSONL stream, parsing lines in parallel. Blank lines are
/// skipped; the first bad line (in file order) is reported.
pub fn read_mbest_jsonl<R: BufRead>(reader: R) -> Result<Vec<MBestRecord>, ReadError> {
    let lines = read_lines(reader)?;
    let parsed: Vec<_> = lines
        .par_iter()
        .map(|(no, line)| parse_mbest_record(line, *no))
        .collect();
    parsed.into_iter().collect::<Result<_, _>>().map_err(ReadError::Record)
}

pub(crate) fn read_lines<R: BufRead>(reader: R) -> Result<Vec<(usize, String)>, std::io::Error> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Gold(#[from] super::gold::GoldError),
}
