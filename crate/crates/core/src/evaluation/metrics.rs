use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::{is_answerable, AnswerSpan, GoldAnnotationSet, Matcher, Token};

/// Precision, recall and F1, with flags for the degenerate cases that are
/// reported as 0 (or 1 for empty-vs-empty surface F1).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Precision had an empty denominator.
    #[serde(default)]
    pub precision_undefined: bool,
    /// Recall had an empty denominator.
    #[serde(default)]
    pub recall_undefined: bool,
    /// Both sides were empty (surface F1 only).
    #[serde(default)]
    pub empty_convention: bool,
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl MatchResult {
    pub fn from_counts(hits: usize, predicted: usize, relevant: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(hits, predicted);
        let recall = ratio(hits, relevant);
        MatchResult {
            precision,
            recall,
            f1: harmonic(precision, recall),
            precision_undefined: predicted == 0,
            recall_undefined: relevant == 0,
            empty_convention: false,
        }
    }
}

/// Multiset token overlap on normalized tokens.
pub fn surface_f1(pred: &[Token], gold: &[Token]) -> MatchResult {
    if pred.is_empty() && gold.is_empty() {
        return MatchResult { precision: 1.0, recall: 1.0, f1: 1.0, empty_convention: true, ..MatchResult::default() };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t.norm()).or_default() += 1;
    }
    let mut common = 0;
    for t in pred {
        if let Some(c) = counts.get_mut(t.norm()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    MatchResult::from_counts(common, pred.len(), gold.len())
}

/// Offsets must agree exactly; `None` stands for an abstain.
pub fn exact_span(pred: Option<&AnswerSpan>, gold: Option<&AnswerSpan>) -> bool {
    match (pred, gold) {
        (Some(p), Some(g)) => p.start == g.start && p.end == g.end,
        _ => false,
    }
}

/// A system's answer to one question; `None` means it abstained.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedAnswer {
    pub question_id: String,
    pub answer: Option<AnswerSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no gold annotations for predicted question {0}")]
    MissingGold(String),
    #[error("duplicate prediction for question {0}")]
    DuplicatePrediction(String),
    #[error("question {0} has fewer than five annotations")]
    TooFewAnnotations(String),
    #[error("resample count must be at least 1")]
    NoResamples,
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("cannot score an empty set")]
    Empty,
}

/// Per-question correctness under the two-annotator agreement rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuestionOutcome {
    pub answerable: bool,
    pub answered: bool,
    pub correct: bool,
}

pub fn judge(answer: Option<&AnswerSpan>, gold: &GoldAnnotationSet, matcher: Matcher) -> QuestionOutcome {
    QuestionOutcome {
        answerable: is_answerable(gold, matcher),
        answered: answer.is_some(),
        correct: answer.is_some_and(|a| gold.support(a, matcher) >= 2),
    }
}

pub fn score_outcomes<'a, I: IntoIterator<Item = &'a QuestionOutcome>>(outcomes: I) -> MatchResult {
    let (mut hits, mut answered, mut answerable) = (0, 0, 0);
    for o in outcomes {
        hits += o.correct as usize;
        answered += o.answered as usize;
        answerable += o.answerable as usize;
    }
    MatchResult::from_counts(hits, answered, answerable)
}

/// Corpus P/R/F1 over the gold set. Questions without a prediction count
/// as abstentions; a prediction without gold is an error.
pub fn nq_score(predictions: &[PredictedAnswer], gold: &[GoldAnnotationSet], matcher: Matcher) -> Result<MatchResult, EvalError> {
    let answers = index_predictions(predictions, gold)?;
    let outcomes: Vec<QuestionOutcome> =
        gold.iter().map(|g| judge(answers.get(g.question_id.as_str()).copied().flatten(), g, matcher)).collect();
    Ok(score_outcomes(&outcomes))
}

pub(crate) fn index_predictions<'a>(
    predictions: &'a [PredictedAnswer],
    gold: &[GoldAnnotationSet],
) -> Result<HashMap<&'a str, Option<&'a AnswerSpan>>, EvalError> {
    let known: HashSet<&str> = gold.iter().map(|g| g.question_id.as_str()).collect();
    let mut out = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if !known.contains(p.question_id.as_str()) {
            return Err(EvalError::MissingGold(p.question_id.clone()));
        }
        if out.insert(p.question_id.as_str(), p.answer.as_ref()).is_some() {
            return Err(EvalError::DuplicatePrediction(p.question_id.clone()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::tokenize;
    use proptest::prelude::*;

    fn span(start: u64, text: &str) -> AnswerSpan {
        let tokens = tokenize(text);
        AnswerSpan { start, end: start + tokens.len() as u64, tokens }
    }

    fn gold(qid: &str, spans: Vec<Option<AnswerSpan>>) -> GoldAnnotationSet {
        GoldAnnotationSet::new(qid.into(), spans).unwrap()
    }

    #[test]
    fn surface_overlap_example() {
        let r = surface_f1(&tokenize("4th century"), &tokenize("the 4th century"));
        assert_eq!(r.precision, 1.0);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.f1 - 0.8).abs() < 1e-15);
        assert_eq!(surface_f1(&tokenize("a b"), &tokenize("c d")).f1, 0.0);
        let empty = surface_f1(&[], &[]);
        assert!(empty.empty_convention && empty.f1 == 1.0);
        assert_eq!(surface_f1(&[], &tokenize("x")).f1, 0.0);
    }

    #[test]
    fn surface_counts_duplicates_once_each() {
        let r = surface_f1(&tokenize("the the the"), &tokenize("the cat"));
        assert!((r.precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.recall, 0.5);
    }

    #[test]
    fn exact_span_needs_offsets() {
        let a = span(13, "Kevin Kline");
        let b = span(30, "Kevin Kline");
        assert!(!exact_span(Some(&a), Some(&b)));
        assert!(exact_span(Some(&b), Some(&b.clone())));
        assert!(!exact_span(None, Some(&b)));
        assert!(!exact_span(None, None));
    }

    #[test]
    fn nq_perfect_and_abstaining_systems() {
        let g = vec![
            gold("a", vec![Some(span(1, "x")), Some(span(1, "x")), None]),
            gold("b", vec![Some(span(5, "y z")), Some(span(5, "y z")), Some(span(9, "q"))]),
        ];
        let perfect = vec![
            PredictedAnswer { question_id: "a".into(), answer: Some(span(1, "x")) },
            PredictedAnswer { question_id: "b".into(), answer: Some(span(5, "y z")) },
        ];
        let r = nq_score(&perfect, &g, Matcher::ExactSpan).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let abstain = nq_score(&[], &g, Matcher::ExactSpan).unwrap();
        assert!(abstain.precision_undefined);
        assert_eq!((abstain.precision, abstain.recall, abstain.f1), (0.0, 0.0, 0.0));
        let stray = vec![PredictedAnswer { question_id: "zzz".into(), answer: None }];
        assert_eq!(nq_score(&stray, &g, Matcher::ExactSpan), Err(EvalError::MissingGold("zzz".into())));
    }

    #[test]
    fn single_annotator_match_is_not_enough() {
        let g = vec![gold("a", vec![Some(span(1, "x")), Some(span(1, "x")), Some(span(4, "w"))])];
        let p = vec![PredictedAnswer { question_id: "a".into(), answer: Some(span(4, "w")) }];
        let r = nq_score(&p, &g, Matcher::ExactSpan).unwrap();
        assert_eq!((r.precision, r.recall), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn surface_f1_is_symmetric_and_bounded(
            a in proptest::collection::vec("[a-c]", 0..6),
            b in proptest::collection::vec("[a-c]", 0..6),
        ) {
            let ta = tokenize(&a.join(" "));
            let tb = tokenize(&b.join(" "));
            let x = surface_f1(&ta, &tb);
            let y = surface_f1(&tb, &ta);
            prop_assert_eq!(x.precision, y.recall);
            prop_assert_eq!(x.recall, y.precision);
            prop_assert_eq!(x.f1, y.f1);
            prop_assert!((0.0..=1.0).contains(&x.f1));
            prop_assert_eq!(surface_f1(&ta, &ta).f1, 1.0);
        }
    }
}
