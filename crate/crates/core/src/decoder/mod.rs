//! Greedy evidence selection, candidate scoring and the answer/abstain
//! decision.

mod answerer;
mod decide;
mod greedy;

use thiserror::Error;

use crate::heads::ModelError;

pub use answerer::{scored_questions, AnswererSettings, MetaAnswerer, Scored, Variant};
pub use decide::{
    best_candidate, choose, decide, evaluate_threshold, parse_prediction, read_predictions, tune_threshold, Decision,
    Prediction, PredictionError, PredictionErrorKind, PredictionReadError, ScoredQuestion, Threshold, ThresholdChoice,
};
pub use greedy::{score_candidates, select_evidence_greedy, Evidence, GreedyStep, GreedyTrace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("k must satisfy 1 <= k <= m (k={k}, m={m})")]
    InvalidK { k: usize, m: usize },
    #[error("threshold tuning needs at least one dev question")]
    EmptyDev,
    #[error("a candidate score is NaN")]
    NonFiniteScore,
    #[error("no M-best record for question {0}")]
    MissingRecord(String),
    #[error("no gold annotations for question {0}")]
    MissingGold(String),
    #[error("question {question}: {scores} scores for {candidates} candidates")]
    ScoreCount { question: String, scores: usize, candidates: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}
