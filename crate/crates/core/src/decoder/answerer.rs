use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::decide::{best_candidate, decide, Prediction, ScoredQuestion};
use super::greedy::{score_candidates, select_evidence_greedy, GreedyTrace};
use super::DecodeError;
use crate::candidates::{apply_condition, is_answerable, AnswerSpan, Condition, GoldAnnotationSet, MBestRecord, Matcher};
use crate::encoder::{mma_base_input, EncodedRecord, FeatureMode, Vocab};
use crate::heads::MetaModel;

/// Full model with evidence selection, or the flat single-sequence baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Full,
    Base,
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "base" => Ok(Variant::Base),
            _ => Err(format!("unknown variant {s:?} (expected full or base)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnswererSettings {
    pub variant: Variant,
    pub condition: Condition,
    /// Context tokens kept on each side of an answer.
    pub window: usize,
    /// Candidates read from each M-best list.
    pub m: usize,
    /// Evidence slots.
    pub k: usize,
    pub features: FeatureMode,
    /// Let a candidate appear in the evidence it is scored against.
    pub allow_self_evidence: bool,
}

impl Default for AnswererSettings {
    fn default() -> Self {
        AnswererSettings {
            variant: Variant::Full,
            condition: Condition::AnswerOnly,
            window: 5,
            m: 5,
            k: 3,
            features: FeatureMode::MinMax,
            allow_self_evidence: true,
        }
    }
}

impl AnswererSettings {
    pub fn validate(&self) -> Result<(), String> {
        if self.m == 0 {
            return Err("m must be at least 1".into());
        }
        if self.k == 0 || self.k > self.m {
            return Err(format!("k must satisfy 1 <= k <= m, got k={} m={}", self.k, self.m));
        }
        Ok(())
    }
}

/// Candidate scores and the evidence they were computed against.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub evidence: Option<GreedyTrace>,
    pub scores: Vec<f64>,
}

/// A trained model bound to its vocabulary and decoding settings.
#[derive(Debug, Clone)]
pub struct MetaAnswerer {
    pub model: MetaModel,
    pub vocab: Vocab,
    pub settings: AnswererSettings,
}

impl MetaAnswerer {
    /// The record as the model sees it: first `m` candidates, condition applied.
    pub fn view(&self, record: &MBestRecord) -> MBestRecord {
        apply_condition(&record.truncated(self.settings.m), self.settings.condition, self.settings.window).record
    }

    pub fn encode(&self, record: &MBestRecord) -> EncodedRecord {
        EncodedRecord::new(&self.view(record), &self.vocab, self.settings.features)
    }

    pub fn score(&self, record: &MBestRecord) -> Result<Scored, DecodeError> {
        let enc = self.encode(record);
        let m = enc.observations.len();
        let model = &self.model;
        if self.settings.variant == Variant::Base {
            let scores = (0..m)
                .map(|i| Ok(model.p_answer_input(&mma_base_input(&enc, i, model.max_len()))?))
                .collect::<Result<_, DecodeError>>()?;
            return Ok(Scored { evidence: None, scores });
        }
        let k = self.settings.k.min(m);
        let trace = select_evidence_greedy(m, k, |h| Ok(model.p_evidence(&enc.question, &enc.title, &enc.evidence(h))?))?;
        let allow_self = self.settings.allow_self_evidence;
        let scores = score_candidates(m, &trace.evidence, |i, h| {
            let slots: Vec<usize> = h.slots.iter().copied().filter(|&s| allow_self || s != i).collect();
            Ok(model.p_answer(&enc.question, &enc.title, &enc.observations[i], &enc.evidence(&slots))?)
        })?;
        Ok(Scored { evidence: Some(trace), scores })
    }

    pub fn predict(&self, record: &MBestRecord, threshold: f64) -> Result<Prediction, DecodeError> {
        let scores = self.score(record)?.scores;
        Ok(decide(&record.truncated(self.settings.m), scores, threshold))
    }

    /// Predictions in input order; records are decoded in parallel.
    pub fn predict_all(&self, records: &[MBestRecord], threshold: f64) -> Result<Vec<Prediction>, DecodeError> {
        records.par_iter().map(|r| self.predict(r, threshold)).collect()
    }
}

/// Joins predictions with their records and gold for threshold tuning.
/// Correctness refers to the best-scoring candidate, whatever the decision.
pub fn scored_questions(
    predictions: &[Prediction],
    records: &[MBestRecord],
    gold: &[GoldAnnotationSet],
    matcher: Matcher,
) -> Result<Vec<ScoredQuestion>, DecodeError> {
    let by_id: HashMap<&str, &MBestRecord> = records.iter().map(|r| (r.question_id.as_str(), r)).collect();
    let gold_by_id: HashMap<&str, &GoldAnnotationSet> = gold.iter().map(|g| (g.question_id.as_str(), g)).collect();
    predictions
        .iter()
        .map(|p| {
            let qid = p.question_id.as_str();
            let record = by_id.get(qid).ok_or_else(|| DecodeError::MissingRecord(qid.to_string()))?;
            let g = gold_by_id.get(qid).ok_or_else(|| DecodeError::MissingGold(qid.to_string()))?;
            let starts: Vec<u64> = record.candidates.iter().take(p.scores.len()).map(|c| c.span_start).collect();
            if starts.len() != p.scores.len() {
                return Err(DecodeError::ScoreCount { question: qid.to_string(), scores: p.scores.len(), candidates: starts.len() });
            }
            let best = best_candidate(&p.scores, &starts);
            let correct = best.is_some_and(|i| {
                let c = &record.candidates[i];
                g.support(&AnswerSpan { start: c.span_start, end: c.span_end, tokens: c.answer.clone() }, matcher) >= 2
            });
            Ok(ScoredQuestion {
                max_score: best.map_or(f64::NEG_INFINITY, |i| p.scores[i]),
                answerable: is_answerable(g, matcher),
                correct,
            })
        })
        .collect()
}
