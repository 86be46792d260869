//! Span metrics, corpus scoring, the annotator bootstrap, outcome labels
//! and report tables.

mod bootstrap;
mod kappa;
mod metrics;
mod report;
mod taxonomy;

pub use bootstrap::{bootstrap_compare, resample_gold, BootstrapResult, BootstrapSubject};
pub use kappa::cohen_kappa;
pub use metrics::{
    exact_span, harmonic, judge, nq_score, score_outcomes, surface_f1, EvalError, MatchResult, PredictedAnswer,
    QuestionOutcome,
};
pub use report::{
    breakdown_from_counts, breakdown_report, episode_diffs, tag_counts, ActionCounts, BreakdownDelta, BreakdownReport,
    BreakdownRow, EpisodeDiff, FlipTag, LabeledEpisode,
};
pub use taxonomy::{classify_outcome, ImpossibleOutcome, OutcomeLabel};
