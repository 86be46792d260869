use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::record::{read_lines, ReadError};
use super::token::{detokenize, normalized, tokenize, Token};

/// Number of gold annotations per question.
pub const ANNOTATORS: usize = 5;

/// An answer span: page offsets plus its tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerSpan {
    pub start: u64,
    pub end: u64,
    pub tokens: Vec<Token>,
}

impl AnswerSpan {
    pub fn text(&self) -> String {
        detokenize(&self.tokens)
    }
}

/// How two spans are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Identical offsets.
    #[default]
    ExactSpan,
    /// Identical token sequences after normalization.
    Surface,
}

impl Matcher {
    pub fn agree(self, a: &AnswerSpan, b: &AnswerSpan) -> bool {
        match self {
            Matcher::ExactSpan => a.start == b.start && a.end == b.end,
            Matcher::Surface => normalized(&a.tokens) == normalized(&b.tokens),
        }
    }
}

/// Five annotator answers for one question; `None` is a NULL annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldAnnotationSet {
    pub question_id: String,
    annotations: Vec<Option<AnswerSpan>>,
    /// Set when the source line had fewer than five annotations.
    pub padded: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GoldErrorKind {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("empty question id")]
    EmptyQuestionId,
    #[error("{0} annotations, at most {ANNOTATORS} allowed")]
    TooMany(usize),
    #[error("annotation {index}: span end {end} precedes start {start}")]
    InvalidSpan { index: usize, start: u64, end: u64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct GoldError {
    pub line: usize,
    pub kind: GoldErrorKind,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireSpan {
    start: u64,
    end: u64,
    text: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireGold {
    qid: String,
    annotations: Vec<Option<WireSpan>>,
}

impl GoldAnnotationSet {
    /// Pads short lists with NULL (and sets `padded`); rejects more than five.
    pub fn new(question_id: String, mut annotations: Vec<Option<AnswerSpan>>) -> Result<Self, GoldErrorKind> {
        if question_id.is_empty() {
            return Err(GoldErrorKind::EmptyQuestionId);
        }
        if annotations.len() > ANNOTATORS {
            return Err(GoldErrorKind::TooMany(annotations.len()));
        }
        for (index, a) in annotations.iter().enumerate() {
            if let Some(s) = a {
                if s.end < s.start {
                    return Err(GoldErrorKind::InvalidSpan { index, start: s.start, end: s.end });
                }
            }
        }
        let padded = annotations.len() < ANNOTATORS;
        annotations.resize(ANNOTATORS, None);
        Ok(GoldAnnotationSet { question_id, annotations, padded })
    }

    pub fn annotations(&self) -> &[Option<AnswerSpan>] {
        &self.annotations
    }

    pub fn non_null(&self) -> impl Iterator<Item = &AnswerSpan> {
        self.annotations.iter().flatten()
    }

    /// Number of non-NULL annotations that agree with `span`.
    pub fn support(&self, span: &AnswerSpan, matcher: Matcher) -> usize {
        self.non_null().filter(|g| matcher.agree(g, span)).count()
    }

    pub fn to_json_line(&self) -> String {
        let wire = WireGold {
            qid: self.question_id.clone(),
            annotations: self
                .annotations
                .iter()
                .map(|a| a.as_ref().map(|s| WireSpan { start: s.start, end: s.end, text: s.text() }))
                .collect(),
        };
        serde_json::to_string(&wire).expect("gold serializes")
    }
}

/// True iff some pair of non-NULL annotations agree under `matcher`.
pub fn is_answerable(gold: &GoldAnnotationSet, matcher: Matcher) -> bool {
    let spans: Vec<&AnswerSpan> = gold.non_null().collect();
    spans
        .iter()
        .enumerate()
        .any(|(i, a)| spans[i + 1..].iter().any(|b| matcher.agree(a, b)))
}

pub fn parse_gold_record(line: &str, line_no: usize) -> Result<GoldAnnotationSet, GoldError> {
    let err = |kind| GoldError { line: line_no, kind };
    let wire: WireGold = serde_json::from_str(line).map_err(|e| err(GoldErrorKind::Json(e.to_string())))?;
    let annotations = wire
        .annotations
        .into_iter()
        .map(|a| a.map(|s| AnswerSpan { start: s.start, end: s.end, tokens: tokenize(&s.text) }))
        .collect();
    GoldAnnotationSet::new(wire.qid, annotations).map_err(err)
}

pub fn read_gold_jsonl<R: BufRead>(reader: R) -> Result<Vec<GoldAnnotationSet>, ReadError> {
    read_lines(reader)?
        .iter()
        .map(|(no, line)| parse_gold_record(line, *no).map_err(ReadError::Gold))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(start: u64, end: u64, text: &str) -> Option<AnswerSpan> {
        Some(AnswerSpan { start, end, tokens: tokenize(text) })
    }

    fn gold(a: Vec<Option<AnswerSpan>>) -> GoldAnnotationSet {
        GoldAnnotationSet::new("q".into(), a).unwrap()
    }

    #[test]
    fn all_null_is_unanswerable() {
        let g = gold(vec![None; 5]);
        assert!(!is_answerable(&g, Matcher::ExactSpan));
        assert!(!is_answerable(&g, Matcher::Surface));
    }

    #[test]
    fn two_agreeing_annotators_make_it_answerable() {
        let g = gold(vec![span(10, 10, "1967"), None, span(10, 10, "1967"), None, None]);
        assert!(is_answerable(&g, Matcher::ExactSpan));
    }

    #[test]
    fn distinct_spans_are_unanswerable_under_exact_only() {
        let g = gold(vec![
            span(1, 2, "4th century"),
            span(5, 6, "4th century"),
            span(9, 11, "the 4th century"),
            span(20, 22, "in the 2nd"),
            span(30, 30, "324"),
        ]);
        assert!(!is_answerable(&g, Matcher::ExactSpan));
        assert!(is_answerable(&g, Matcher::Surface));
    }

    #[test]
    fn short_lists_are_padded_and_flagged() {
        let g = parse_gold_record(r#"{"qid":"q","annotations":[{"start":1,"end":2,"text":"a b"}]}"#, 1).unwrap();
        assert!(g.padded);
        assert_eq!(g.annotations().len(), ANNOTATORS);
        let six = r#"{"qid":"q","annotations":[null,null,null,null,null,null]}"#;
        assert_eq!(parse_gold_record(six, 4).unwrap_err().kind, GoldErrorKind::TooMany(6));
    }

    #[test]
    fn adding_a_duplicate_never_breaks_answerability() {
        let base = vec![span(3, 4, "x y"), span(3, 4, "x y"), None, None];
        let before = is_answerable(&gold(base.clone()), Matcher::ExactSpan);
        let mut more = base;
        more.push(span(3, 4, "x y"));
        assert!(before && is_answerable(&gold(more), Matcher::ExactSpan));
    }

    #[test]
    fn round_trips_through_json() {
        let g = gold(vec![span(3, 4, "x y"), None, None, None, None]);
        assert_eq!(parse_gold_record(&g.to_json_line(), 1).unwrap(), g);
    }
}
