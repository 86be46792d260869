use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::record::MBestRecord;

/// What a meta-answerer may see of each candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Question and candidate answers only.
    AnswerOnly,
    /// Answers with a window of context on each side.
    Context,
    /// As `Context`, plus the ability to ask rewritten questions.
    RewriteQues,
}

impl Condition {
    pub fn shows_context(self) -> bool {
        !matches!(self, Condition::AnswerOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::AnswerOnly => "answeronly",
            Condition::Context => "context",
            Condition::RewriteQues => "rewriteques",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "answeronly" => Ok(Condition::AnswerOnly),
            "context" => Ok(Condition::Context),
            "rewriteques" | "rewrite" => Ok(Condition::RewriteQues),
            other => Err(format!("unknown condition `{other}`")),
        }
    }
}

/// A record as seen under a condition: contexts stripped or windowed.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionView {
    pub condition: Condition,
    pub window: usize,
    pub record: MBestRecord,
}

/// Strips contexts (`AnswerOnly`) or keeps the `window` tokens nearest the
/// answer on each side.
pub fn apply_condition(record: &MBestRecord, condition: Condition, window: usize) -> ConditionView {
    let mut record = record.clone();
    for c in &mut record.candidates {
        if condition.shows_context() {
            let skip = c.left.len().saturating_sub(window);
            c.left.drain(..skip);
            c.right.truncate(window);
        } else {
            c.left.clear();
            c.right.clear();
        }
    }
    ConditionView { condition, window, record }
}
