//! Session state. Every change is an [`Event`]; a session is exactly the
//! fold of its event log, so replaying a persisted log rebuilds it.

use std::collections::HashMap;

use metaqa_core::candidates::{
    apply_condition, detokenize, is_answerable, AnswerSpan, Condition, GoldAnnotationSet, MBestRecord, Matcher,
    Observation,
};
use metaqa_core::evaluation::{classify_outcome, judge, ImpossibleOutcome, OutcomeLabel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REVEAL_LIMIT: usize = 20;
pub const DEFAULT_SAMPLE: usize = 100;
pub const DEFAULT_WINDOW: usize = 5;

/// The question dump sessions sample from, keyed by question id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<MBestRecord>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("duplicate question id `{0}` in corpus")]
pub struct DuplicateQuestion(pub String);

impl Corpus {
    pub fn new(records: Vec<MBestRecord>) -> Result<Self, DuplicateQuestion> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.question_id.clone(), i).is_some() {
                return Err(DuplicateQuestion(r.question_id.clone()));
            }
        }
        Ok(Corpus { records, index })
    }

    pub fn get(&self, question_id: &str) -> Option<&MBestRecord> {
        self.index.get(question_id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[MBestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Up to `n` question ids in a seed-determined order.
    pub fn sample(&self, seed: u64, n: usize) -> Vec<String> {
        let mut ids: Vec<&str> = self.records.iter().map(|r| r.question_id.as_str()).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        ids.into_iter().take(n).map(str::to_string).collect()
    }
}

/// One candidate as a player sees it. Context strings are empty under
/// `AnswerOnly`; the score is present only when the session shows scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub index: usize,
    pub left: String,
    pub answer: String,
    pub right: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub start: u64,
    pub end: u64,
}

impl CandidateView {
    /// Renders an already condition-gated observation.
    fn from_gated(index: usize, c: &Observation, show_scores: bool) -> Self {
        CandidateView {
            index,
            left: detokenize(&c.left),
            answer: detokenize(&c.answer),
            right: detokenize(&c.right),
            score: show_scores.then_some(c.score),
            start: c.span_start,
            end: c.span_end,
        }
    }
}

/// A backend's answer list, rendered under the session's condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteView {
    pub question: String,
    pub candidates: Vec<CandidateView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteOutcome {
    Ok(RewriteView),
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteAttempt {
    pub text: String,
    pub backend: String,
    pub same_page: bool,
    pub outcome: RewriteOutcome,
}

/// Fixed at session creation and written as the first log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub session_id: String,
    pub user_id: String,
    pub condition: Condition,
    pub seed: u64,
    pub window: usize,
    pub show_scores: bool,
    pub questions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Start(SessionHeader),
    Reveal {
        question_id: String,
        index: usize,
    },
    Rewrite {
        question_id: String,
        #[serde(flatten)]
        attempt: RewriteAttempt,
    },
    Select {
        question_id: String,
        index: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        idempotency_key: Option<String>,
    },
    Abstain {
        question_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        idempotency_key: Option<String>,
    },
}

/// One log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Reveal { index: usize },
    Rewrite { text: String, backend: String, ok: bool },
    Select { index: usize },
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedAction {
    pub at_ms: u64,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FinalDecision {
    Select { index: usize, answer: String, start: u64, end: u64 },
    Abstain,
}

/// A finished episode. Never modified after it is created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub question_id: String,
    pub condition: Condition,
    pub actions: Vec<LoggedAction>,
    pub decision: FinalDecision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

impl EpisodeLog {
    /// Joins the episode with gold annotations. `record` must be the
    /// question's M-best list.
    pub fn outcome(
        &self,
        record: &MBestRecord,
        gold: &GoldAnnotationSet,
        matcher: Matcher,
    ) -> Result<OutcomeLabel, ImpossibleOutcome> {
        let answerable = is_answerable(gold, matcher);
        match &self.decision {
            FinalDecision::Abstain => classify_outcome(answerable, false, false),
            FinalDecision::Select { index, .. } => {
                let c = record.candidates.get(*index).ok_or(ImpossibleOutcome)?;
                let span = AnswerSpan { start: c.span_start, end: c.span_end, tokens: c.answer.clone() };
                classify_outcome(answerable, true, judge(Some(&span), gold, matcher).correct)
            }
        }
    }
}

/// The episode in progress.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Episode {
    pub question_id: String,
    pub revealed: usize,
    pub actions: Vec<LoggedAction>,
    pub rewrites: Vec<RewriteAttempt>,
}

impl Episode {
    fn new(question_id: String) -> Self {
        Episode { question_id, revealed: 0, actions: Vec::new(), rewrites: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("session is finished")]
    Finished,
    #[error("rewrites not permitted in the {0} condition")]
    RewriteNotPermitted(Condition),
    #[error("candidate {index} has not been revealed ({revealed} revealed)")]
    Unrevealed { index: usize, revealed: usize },
    #[error("question `{0}` was already submitted")]
    AlreadySubmitted(String),
    #[error("question `{got}` is not the active question (`{expected}` is)")]
    NotActive { expected: String, got: String },
    #[error("question `{0}` is not in the corpus")]
    UnknownQuestion(String),
    #[error("reveal limit reached")]
    Exhausted,
    #[error("malformed log: {0}")]
    Log(String),
}

/// A player's terminal choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Submission {
    Select { index: usize },
    Abstain,
}

/// What a submit request resolves to.
#[derive(Debug, Clone, PartialEq)]
pub enum SubmitPlan {
    Apply(EventKind),
    /// A retry of an already finalized submission.
    Repeat(EpisodeLog),
}

/// The result of applying one event.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    Started,
    Revealed(CandidateView),
    Rewritten(RewriteAttempt),
    Finalized(EpisodeLog),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub header: SessionHeader,
    pub created_ms: u64,
    pub next_seq: u64,
    pub episodes: Vec<EpisodeLog>,
    pub current: Option<Episode>,
}

impl Session {
    /// A session from its start event.
    pub fn start(event: &Event, corpus: &Corpus) -> Result<Self, SessionError> {
        let EventKind::Start(header) = &event.kind else {
            return Err(SessionError::Log("first event is not a start event".into()));
        };
        if event.seq != 0 {
            return Err(SessionError::Log(format!("start event has seq {}", event.seq)));
        }
        if header.questions.is_empty() {
            return Err(SessionError::Log("session has no questions".into()));
        }
        if let Some(q) = header.questions.iter().find(|q| corpus.get(q).is_none()) {
            return Err(SessionError::UnknownQuestion(q.clone()));
        }
        Ok(Session {
            current: Some(Episode::new(header.questions[0].clone())),
            header: header.clone(),
            created_ms: event.at_ms,
            next_seq: 1,
            episodes: Vec::new(),
        })
    }

    /// Rebuilds a session from its full log.
    pub fn replay(events: &[Event], corpus: &Corpus) -> Result<Self, SessionError> {
        let (first, rest) = events.split_first().ok_or_else(|| SessionError::Log("empty log".into()))?;
        let mut s = Session::start(first, corpus)?;
        for e in rest {
            s.apply(e, corpus)?;
        }
        Ok(s)
    }

    pub fn status(&self) -> Status {
        if self.current.is_some() {
            Status::Active
        } else {
            Status::Finished
        }
    }

    fn active(&self) -> Result<&Episode, SessionError> {
        self.current.as_ref().ok_or(SessionError::Finished)
    }

    fn record<'c>(&self, corpus: &'c Corpus, question_id: &str) -> Result<&'c MBestRecord, SessionError> {
        corpus.get(question_id).ok_or_else(|| SessionError::UnknownQuestion(question_id.to_string()))
    }

    /// The gated view of a question's candidates.
    fn gated(&self, record: &MBestRecord) -> MBestRecord {
        apply_condition(record, self.header.condition, self.header.window).record
    }

    pub fn reveal_limit(&self, corpus: &Corpus) -> usize {
        self.current
            .as_ref()
            .and_then(|e| corpus.get(&e.question_id))
            .map_or(0, |r| r.m().min(REVEAL_LIMIT))
    }

    /// The next reveal event, or `Exhausted` once the limit is reached.
    pub fn plan_reveal(&self, corpus: &Corpus) -> Result<EventKind, SessionError> {
        let ep = self.active()?;
        if ep.revealed >= self.reveal_limit(corpus) {
            return Err(SessionError::Exhausted);
        }
        Ok(EventKind::Reveal { question_id: ep.question_id.clone(), index: ep.revealed })
    }

    /// Checks that a rewrite may be attempted; returns the active question.
    pub fn check_rewrite(&self) -> Result<&str, SessionError> {
        let ep = self.active()?;
        if self.header.condition != Condition::RewriteQues {
            return Err(SessionError::RewriteNotPermitted(self.header.condition));
        }
        Ok(&ep.question_id)
    }

    /// Renders a backend response under this session's condition, keeping
    /// at most the reveal limit.
    pub fn render_rewrite(&self, record: &MBestRecord) -> RewriteView {
        let gated = self.gated(record);
        RewriteView {
            question: detokenize(&record.question),
            candidates: gated
                .candidates
                .iter()
                .take(REVEAL_LIMIT)
                .enumerate()
                .map(|(i, c)| CandidateView::from_gated(i, c, self.header.show_scores))
                .collect(),
        }
    }

    pub fn plan_submit(
        &self,
        question_id: Option<&str>,
        submission: Submission,
        idempotency_key: Option<String>,
    ) -> Result<SubmitPlan, SessionError> {
        let done = |qid: &str| self.episodes.iter().find(|e| e.question_id == qid);
        let repeat = |log: &EpisodeLog| {
            if idempotency_key.is_some() && log.idempotency_key == idempotency_key {
                Ok(SubmitPlan::Repeat(log.clone()))
            } else {
                Err(SessionError::AlreadySubmitted(log.question_id.clone()))
            }
        };
        if let Some(log) = question_id.and_then(done) {
            return repeat(log);
        }
        if question_id.is_none() && idempotency_key.is_some() {
            if let Some(log) = self.episodes.iter().find(|e| e.idempotency_key == idempotency_key) {
                return Ok(SubmitPlan::Repeat(log.clone()));
            }
        }
        let ep = self.active()?;
        if let Some(q) = question_id.filter(|q| *q != ep.question_id) {
            return Err(SessionError::NotActive { expected: ep.question_id.clone(), got: q.to_string() });
        }
        let question_id = ep.question_id.clone();
        Ok(SubmitPlan::Apply(match submission {
            Submission::Select { index } => {
                if index >= ep.revealed {
                    return Err(SessionError::Unrevealed { index, revealed: ep.revealed });
                }
                EventKind::Select { question_id, index, idempotency_key }
            }
            Submission::Abstain => EventKind::Abstain { question_id, idempotency_key },
        }))
    }

    /// Validates and applies one event. On error the session is unchanged.
    pub fn apply(&mut self, event: &Event, corpus: &Corpus) -> Result<Applied, SessionError> {
        if event.seq != self.next_seq {
            return Err(SessionError::Log(format!("expected seq {}, found {}", self.next_seq, event.seq)));
        }
        let applied = match &event.kind {
            EventKind::Start(_) => return Err(SessionError::Log("repeated start event".into())),
            EventKind::Reveal { question_id, index } => {
                self.expect_active(question_id)?;
                let EventKind::Reveal { index: next, .. } = self.plan_reveal(corpus)? else { unreachable!() };
                if *index != next {
                    return Err(SessionError::Log(format!("reveal of {index} out of order (next is {next})")));
                }
                let gated = self.gated(self.record(corpus, question_id)?);
                let view = CandidateView::from_gated(*index, &gated.candidates[*index], self.header.show_scores);
                let ep = self.current.as_mut().expect("checked active");
                ep.revealed += 1;
                ep.actions.push(LoggedAction { at_ms: event.at_ms, action: Action::Reveal { index: *index } });
                Applied::Revealed(view)
            }
            EventKind::Rewrite { question_id, attempt } => {
                self.expect_active(question_id)?;
                self.check_rewrite()?;
                let ep = self.current.as_mut().expect("checked active");
                ep.actions.push(LoggedAction {
                    at_ms: event.at_ms,
                    action: Action::Rewrite {
                        text: attempt.text.clone(),
                        backend: attempt.backend.clone(),
                        ok: matches!(attempt.outcome, RewriteOutcome::Ok(_)),
                    },
                });
                ep.rewrites.push(attempt.clone());
                Applied::Rewritten(attempt.clone())
            }
            EventKind::Select { question_id, index, idempotency_key } => {
                let plan = self.plan_submit(Some(question_id), Submission::Select { index: *index }, None)?;
                debug_assert!(matches!(plan, SubmitPlan::Apply(_)));
                let c = &self.record(corpus, question_id)?.candidates[*index];
                let decision = FinalDecision::Select {
                    index: *index,
                    answer: c.answer_text(),
                    start: c.span_start,
                    end: c.span_end,
                };
                self.finalize(event.at_ms, Action::Select { index: *index }, decision, idempotency_key.clone())
            }
            EventKind::Abstain { question_id, idempotency_key } => {
                self.plan_submit(Some(question_id), Submission::Abstain, None)?;
                self.finalize(event.at_ms, Action::Abstain, FinalDecision::Abstain, idempotency_key.clone())
            }
        };
        self.next_seq += 1;
        Ok(applied)
    }

    fn expect_active(&self, question_id: &str) -> Result<(), SessionError> {
        let ep = self.active()?;
        if ep.question_id != question_id {
            return Err(SessionError::NotActive { expected: ep.question_id.clone(), got: question_id.to_string() });
        }
        Ok(())
    }

    fn finalize(&mut self, at_ms: u64, action: Action, decision: FinalDecision, key: Option<String>) -> Applied {
        let mut ep = self.current.take().expect("checked active");
        ep.actions.push(LoggedAction { at_ms, action });
        let log = EpisodeLog {
            question_id: ep.question_id,
            condition: self.header.condition,
            actions: ep.actions,
            decision,
            idempotency_key: key,
        };
        self.episodes.push(log.clone());
        self.current = self.header.questions.get(self.episodes.len()).cloned().map(Episode::new);
        Applied::Finalized(log)
    }

    /// What the player currently sees.
    pub fn view(&self, corpus: &Corpus) -> SessionView {
        let question = self.current.as_ref().and_then(|ep| {
            let record = corpus.get(&ep.question_id)?;
            let gated = self.gated(record);
            Some(QuestionView {
                question_id: ep.question_id.clone(),
                question: detokenize(&record.question),
                revealed: gated.candidates[..ep.revealed]
                    .iter()
                    .enumerate()
                    .map(|(i, c)| CandidateView::from_gated(i, c, self.header.show_scores))
                    .collect(),
                reveal_limit: record.m().min(REVEAL_LIMIT),
                rewrites: ep.rewrites.clone(),
            })
        });
        SessionView {
            session_id: self.header.session_id.clone(),
            user_id: self.header.user_id.clone(),
            condition: self.header.condition,
            status: self.status(),
            position: self.episodes.len(),
            total: self.header.questions.len(),
            question,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub question_id: String,
    pub question: String,
    pub revealed: Vec<CandidateView>,
    pub reveal_limit: usize,
    pub rewrites: Vec<RewriteAttempt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub user_id: String,
    pub condition: Condition,
    pub status: Status,
    /// Number of finished episodes.
    pub position: usize,
    pub total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<QuestionView>,
}
