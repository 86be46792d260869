use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::taxonomy::OutcomeLabel;

/// One labeled episode of some system (a model, an annotator, a human).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEpisode {
    pub system: String,
    pub question_id: String,
    pub label: OutcomeLabel,
}

/// Abstain/answer by correct/incorrect counts for one system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionCounts {
    pub abstain_correct: i64,
    pub abstain_incorrect: i64,
    pub answer_correct: i64,
    pub answer_incorrect: i64,
}

impl ActionCounts {
    pub fn new(abstain_correct: i64, abstain_incorrect: i64, answer_correct: i64, answer_incorrect: i64) -> Self {
        ActionCounts { abstain_correct, abstain_incorrect, answer_correct, answer_incorrect }
    }

    pub fn add(&mut self, label: OutcomeLabel) {
        match label {
            OutcomeLabel::Abstain => self.abstain_correct += 1,
            OutcomeLabel::Dead => self.abstain_incorrect += 1,
            OutcomeLabel::Right => self.answer_correct += 1,
            OutcomeLabel::Neg | OutcomeLabel::Fool => self.answer_incorrect += 1,
        }
    }

    pub fn total(&self) -> i64 {
        self.abstain_correct + self.abstain_incorrect + self.answer_correct + self.answer_incorrect
    }

    /// Percentage of abstentions that were right; `None` with no abstentions.
    pub fn abstain_accuracy(&self) -> Option<f64> {
        percent(self.abstain_correct, self.abstain_correct + self.abstain_incorrect)
    }

    pub fn answer_accuracy(&self) -> Option<f64> {
        percent(self.answer_correct, self.answer_correct + self.answer_incorrect)
    }

    pub fn minus(&self, other: &ActionCounts) -> ActionCounts {
        ActionCounts {
            abstain_correct: self.abstain_correct - other.abstain_correct,
            abstain_incorrect: self.abstain_incorrect - other.abstain_incorrect,
            answer_correct: self.answer_correct - other.answer_correct,
            answer_incorrect: self.answer_incorrect - other.answer_incorrect,
        }
    }
}

fn percent(n: i64, d: i64) -> Option<f64> {
    (d > 0).then(|| 100.0 * n as f64 / d as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub system: String,
    pub counts: ActionCounts,
    pub abstain_accuracy: Option<f64>,
    pub answer_accuracy: Option<f64>,
}

/// Count differences `first - second` between two systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownDelta {
    pub first: String,
    pub second: String,
    pub delta: ActionCounts,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BreakdownReport {
    pub rows: Vec<BreakdownRow>,
    pub deltas: Vec<BreakdownDelta>,
}

/// Rows in the given system order; a delta for every consecutive pair.
pub fn breakdown_from_counts(systems: &[(String, ActionCounts)]) -> BreakdownReport {
    let rows: Vec<BreakdownRow> = systems
        .iter()
        .map(|(system, c)| BreakdownRow {
            system: system.clone(),
            counts: *c,
            abstain_accuracy: c.abstain_accuracy(),
            answer_accuracy: c.answer_accuracy(),
        })
        .collect();
    let deltas = rows
        .windows(2)
        .map(|w| BreakdownDelta { first: w[0].system.clone(), second: w[1].system.clone(), delta: w[0].counts.minus(&w[1].counts) })
        .collect();
    BreakdownReport { rows, deltas }
}

/// Per-system breakdown, systems in order of first appearance.
pub fn breakdown_report(episodes: &[LabeledEpisode]) -> BreakdownReport {
    let mut order: Vec<String> = Vec::new();
    let mut counts: BTreeMap<&str, ActionCounts> = BTreeMap::new();
    for e in episodes {
        if !counts.contains_key(e.system.as_str()) {
            order.push(e.system.clone());
        }
        counts.entry(e.system.as_str()).or_default().add(e.label);
    }
    let systems: Vec<(String, ActionCounts)> = order.iter().map(|s| (s.clone(), counts[s.as_str()])).collect();
    breakdown_from_counts(&systems)
}

fn fmt_pct(p: Option<f64>) -> String {
    p.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

impl BreakdownReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "system,abstain_correct,abstain_incorrect,answer_correct,answer_incorrect,abstain_accuracy,answer_accuracy\n",
        );
        for r in &self.rows {
            let c = &r.counts;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.system,
                c.abstain_correct,
                c.abstain_incorrect,
                c.answer_correct,
                c.answer_incorrect,
                r.abstain_accuracy.map_or(String::new(), |v| format!("{v:.2}")),
                r.answer_accuracy.map_or(String::new(), |v| format!("{v:.2}")),
            );
        }
        for d in &self.deltas {
            let c = &d.delta;
            let _ = writeln!(
                s,
                "{} - {},{},{},{},{},,",
                d.first, d.second, c.abstain_correct, c.abstain_incorrect, c.answer_correct, c.answer_incorrect
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        if self.rows.is_empty() {
            return "(no episodes)\n".to_string();
        }
        let width = self
            .rows
            .iter()
            .map(|r| r.system.len())
            .chain(self.deltas.iter().map(|d| d.first.len() + d.second.len() + 3))
            .max()
            .unwrap_or(0)
            .max(6);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$}  {:>8} {:>8} {:>8}  {:>8} {:>8} {:>8}",
            "system", "abst ok", "abst bad", "acc %", "ans ok", "ans bad", "acc %"
        );
        for r in &self.rows {
            let c = &r.counts;
            let _ = writeln!(
                s,
                "{:<width$}  {:>8} {:>8} {:>8}  {:>8} {:>8} {:>8}",
                r.system,
                c.abstain_correct,
                c.abstain_incorrect,
                fmt_pct(r.abstain_accuracy),
                c.answer_correct,
                c.answer_incorrect,
                fmt_pct(r.answer_accuracy)
            );
        }
        for d in &self.deltas {
            let c = &d.delta;
            let name = format!("{} - {}", d.first, d.second);
            let _ = writeln!(
                s,
                "{:<width$}  {:>+8} {:>+8} {:>8}  {:>+8} {:>+8} {:>8}",
                name, c.abstain_correct, c.abstain_incorrect, "", c.answer_correct, c.answer_incorrect, ""
            );
        }
        s
    }
}

/// Hand-assigned reason a question's outcome changed between two systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipTag {
    EntityChange,
    DifferentSpan,
    IncorrectSpan,
}

/// A question labeled differently by two systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeDiff {
    pub question_id: String,
    pub first: OutcomeLabel,
    pub second: OutcomeLabel,
    #[serde(default)]
    pub tag: Option<FlipTag>,
}

/// Questions both systems played whose labels differ, sorted by id.
pub fn episode_diffs(episodes: &[LabeledEpisode], first: &str, second: &str) -> Vec<EpisodeDiff> {
    let pick = |sys: &str| -> BTreeMap<&str, OutcomeLabel> {
        episodes.iter().filter(|e| e.system == sys).map(|e| (e.question_id.as_str(), e.label)).collect()
    };
    let a = pick(first);
    let b = pick(second);
    a.iter()
        .filter_map(|(q, &la)| {
            b.get(q).filter(|&&lb| lb != la).map(|&lb| EpisodeDiff { question_id: q.to_string(), first: la, second: lb, tag: None })
        })
        .collect()
}

/// Number of diffs per tag, untagged ones under `None`.
pub fn tag_counts(diffs: &[EpisodeDiff]) -> BTreeMap<Option<FlipTag>, usize> {
    let mut out = BTreeMap::new();
    for d in diffs {
        *out.entry(d.tag).or_default() += 1;
    }
    out
}
