use std::io::BufRead;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::DecodeError;
use crate::candidates::{read_lines, tokenize, AnswerSpan, MBestRecord};
use crate::evaluation::{score_outcomes, MatchResult, PredictedAnswer, QuestionOutcome};

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Answer { index: usize, start: u64, end: u64, text: String },
    Abstain,
}

/// A decision plus the score of every candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub question_id: String,
    pub decision: Decision,
    /// Highest candidate score.
    pub score: f64,
    pub scores: Vec<f64>,
}

impl Prediction {
    pub fn answer_index(&self) -> Option<usize> {
        match self.decision {
            Decision::Answer { index, .. } => Some(index),
            Decision::Abstain => None,
        }
    }

    pub fn to_answer(&self) -> PredictedAnswer {
        let answer = match &self.decision {
            Decision::Answer { start, end, text, .. } => Some(AnswerSpan { start: *start, end: *end, tokens: tokenize(text) }),
            Decision::Abstain => None,
        };
        PredictedAnswer { question_id: self.question_id.clone(), answer }
    }
}

/// Index of the highest score, ties going to the earliest span start and
/// then the lower index.
pub fn best_candidate(scores: &[f64], starts: &[u64]) -> Option<usize> {
    (0..scores.len()).reduce(|best, i| {
        if scores[i] > scores[best] || (scores[i] == scores[best] && starts[i] < starts[best]) {
            i
        } else {
            best
        }
    })
}

/// The best candidate if its score is strictly above `threshold`.
pub fn choose(scores: &[f64], starts: &[u64], threshold: f64) -> Option<usize> {
    best_candidate(scores, starts).filter(|&i| scores[i] > threshold)
}

/// Turns candidate scores into a prediction for `record`.
pub fn decide(record: &MBestRecord, scores: Vec<f64>, threshold: f64) -> Prediction {
    let starts: Vec<u64> = record.candidates.iter().map(|c| c.span_start).collect();
    let score = best_candidate(&scores, &starts).map_or(f64::NEG_INFINITY, |i| scores[i]);
    let decision = match choose(&scores, &starts, threshold) {
        Some(index) => {
            let c = &record.candidates[index];
            Decision::Answer { index, start: c.span_start, end: c.span_end, text: c.answer_text() }
        }
        None => Decision::Abstain,
    };
    Prediction { question_id: record.question_id.clone(), decision, score, scores }
}

/// What threshold tuning needs to know about one dev question.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredQuestion {
    pub max_score: f64,
    pub answerable: bool,
    /// The best-scoring candidate is a correct answer.
    pub correct: bool,
}

/// Dev result at one threshold.
pub fn evaluate_threshold(dev: &[ScoredQuestion], threshold: f64) -> MatchResult {
    let outcomes: Vec<QuestionOutcome> = dev
        .iter()
        .map(|q| {
            let answered = q.max_score > threshold;
            QuestionOutcome { answerable: q.answerable, answered, correct: answered && q.correct }
        })
        .collect();
    score_outcomes(&outcomes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: Threshold,
    pub result: MatchResult,
}

/// Highest dev F1 over every distinct max score plus both infinities, with
/// ties going to the larger threshold.
pub fn tune_threshold(dev: &[ScoredQuestion]) -> Result<ThresholdChoice, DecodeError> {
    if dev.is_empty() {
        return Err(DecodeError::EmptyDev);
    }
    if dev.iter().any(|q| q.max_score.is_nan()) {
        return Err(DecodeError::NonFiniteScore);
    }
    let mut order: Vec<usize> = (0..dev.len()).collect();
    order.sort_by(|&a, &b| dev[b].max_score.total_cmp(&dev[a].max_score));
    let answerable = dev.iter().filter(|q| q.answerable).count();
    let at = |hits: usize, answered: usize| MatchResult::from_counts(hits, answered, answerable);

    // Thresholds from +inf downward; `answered` counts scores strictly above.
    let mut best = ThresholdChoice { threshold: Threshold(f64::INFINITY), result: at(0, 0) };
    let (mut hits, mut answered) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let t = dev[order[i]].max_score;
        let r = at(hits, answered);
        if r.f1 > best.result.f1 {
            best = ThresholdChoice { threshold: Threshold(t), result: r };
        }
        while i < order.len() && dev[order[i]].max_score == t {
            answered += 1;
            hits += dev[order[i]].correct as usize;
            i += 1;
        }
    }
    let r = at(hits, answered);
    if r.f1 > best.result.f1 {
        best = ThresholdChoice { threshold: Threshold(f64::NEG_INFINITY), result: r };
    }
    Ok(best)
}

/// A decision threshold; serialized as a number, or as `"inf"` / `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Threshold(pub f64);

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Num(f64),
            Text(String),
        }
        match Wire::deserialize(d)? {
            Wire::Num(v) if v.is_finite() => Ok(Threshold(v)),
            Wire::Num(_) => Err(serde::de::Error::custom("threshold must be finite or \"inf\"/\"-inf\"")),
            Wire::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for Threshold {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "inf" | "+inf" => Ok(Threshold(f64::INFINITY)),
            "-inf" => Ok(Threshold(f64::NEG_INFINITY)),
            t => match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Threshold(v)),
                _ => Err(format!("invalid threshold {t:?}")),
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum WireDecision {
    Answer,
    Abstain,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WirePrediction {
    qid: String,
    decision: WireDecision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    score: f64,
    scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictionErrorKind {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("an answer needs index, start, end and text")]
    IncompleteAnswer,
    #[error("an abstention carries no answer fields")]
    AbstainWithAnswer,
    #[error("answer index {index} outside {len} scores")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("span end {end} precedes start {start}")]
    InvalidSpan { start: u64, end: u64 },
    #[error("scores must be finite and lie in [0, 1]")]
    BadScore,
    #[error("empty question id")]
    EmptyQuestionId,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {kind}")]
pub struct PredictionError {
    pub line: usize,
    pub kind: PredictionErrorKind,
}

impl Prediction {
    pub fn to_json_line(&self) -> String {
        let (decision, index, start, end, text) = match &self.decision {
            Decision::Answer { index, start, end, text } => {
                (WireDecision::Answer, Some(*index), Some(*start), Some(*end), Some(text.clone()))
            }
            Decision::Abstain => (WireDecision::Abstain, None, None, None, None),
        };
        let score = if self.score.is_finite() { self.score } else { 0.0 };
        serde_json::to_string(&WirePrediction {
            qid: self.question_id.clone(),
            decision,
            index,
            start,
            end,
            text,
            score,
            scores: self.scores.clone(),
        })
        .expect("prediction serializes")
    }
}

pub fn parse_prediction(line: &str, line_no: usize) -> Result<Prediction, PredictionError> {
    let err = |kind| PredictionError { line: line_no, kind };
    let w: WirePrediction = serde_json::from_str(line).map_err(|e| err(PredictionErrorKind::Json(e.to_string())))?;
    if w.qid.is_empty() {
        return Err(err(PredictionErrorKind::EmptyQuestionId));
    }
    let in_range = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
    if !in_range(w.score) || !w.scores.iter().all(|&s| in_range(s)) {
        return Err(err(PredictionErrorKind::BadScore));
    }
    let decision = match w.decision {
        WireDecision::Answer => match (w.index, w.start, w.end, w.text) {
            (Some(index), Some(start), Some(end), Some(text)) => {
                if index >= w.scores.len() {
                    return Err(err(PredictionErrorKind::IndexOutOfRange { index, len: w.scores.len() }));
                }
                if end < start {
                    return Err(err(PredictionErrorKind::InvalidSpan { start, end }));
                }
                Decision::Answer { index, start, end, text }
            }
            _ => return Err(err(PredictionErrorKind::IncompleteAnswer)),
        },
        WireDecision::Abstain => {
            if w.index.is_some() || w.start.is_some() || w.end.is_some() || w.text.is_some() {
                return Err(err(PredictionErrorKind::AbstainWithAnswer));
            }
            Decision::Abstain
        }
    };
    Ok(Prediction { question_id: w.qid, decision, score: w.score, scores: w.scores })
}

#[derive(Debug, Error)]
pub enum PredictionReadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Parse(#[from] PredictionError),
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<Prediction>, PredictionReadError> {
    let lines = read_lines(reader)?;
    lines.iter().map(|(no, l)| parse_prediction(l, *no).map_err(PredictionReadError::Parse)).collect()
}
