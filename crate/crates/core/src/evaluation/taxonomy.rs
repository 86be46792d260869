use serde::{Deserialize, Serialize};
use thiserror::Error;

/// What happened in one finished episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeLabel {
    /// Answerable, answered correctly.
    Right,
    /// Answerable, answered wrongly.
    Neg,
    /// Unanswerable, but answered anyway.
    Fool,
    /// Answerable, but abstained.
    Dead,
    /// Unanswerable, abstained.
    Abstain,
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 5] =
        [OutcomeLabel::Right, OutcomeLabel::Neg, OutcomeLabel::Fool, OutcomeLabel::Dead, OutcomeLabel::Abstain];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeLabel::Right => "right",
            OutcomeLabel::Neg => "neg",
            OutcomeLabel::Fool => "fool",
            OutcomeLabel::Dead => "dead",
            OutcomeLabel::Abstain => "abstain",
        }
    }

    pub fn answered(self) -> bool {
        matches!(self, OutcomeLabel::Right | OutcomeLabel::Neg | OutcomeLabel::Fool)
    }

    /// Whether the action taken was the right one.
    pub fn correct(self) -> bool {
        matches!(self, OutcomeLabel::Right | OutcomeLabel::Abstain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("a correct answer to an unanswerable question is impossible")]
pub struct ImpossibleOutcome;

pub fn classify_outcome(answerable: bool, answered: bool, correct: bool) -> Result<OutcomeLabel, ImpossibleOutcome> {
    Ok(match (answerable, answered, correct) {
        (true, true, true) => OutcomeLabel::Right,
        (true, true, false) => OutcomeLabel::Neg,
        (false, true, false) => OutcomeLabel::Fool,
        (false, true, true) => return Err(ImpossibleOutcome),
        (true, false, _) => OutcomeLabel::Dead,
        (false, false, _) => OutcomeLabel::Abstain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table() {
        assert_eq!(classify_outcome(true, true, true), Ok(OutcomeLabel::Right));
        assert_eq!(classify_outcome(true, true, false), Ok(OutcomeLabel::Neg));
        assert_eq!(classify_outcome(false, true, false), Ok(OutcomeLabel::Fool));
        assert_eq!(classify_outcome(true, false, false), Ok(OutcomeLabel::Dead));
        assert_eq!(classify_outcome(false, false, false), Ok(OutcomeLabel::Abstain));
        assert_eq!(classify_outcome(false, true, true), Err(ImpossibleOutcome));
    }
}
