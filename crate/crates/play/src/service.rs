//! Session management over a corpus, a set of backends and a store.
//! Requests to one session are serialized by that session's lock.

use std::collections::HashMap;
use std::io;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use metaqa_core::candidates::{detokenize, Condition};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, BackendRequest, Backends};
use crate::session::{
    Applied, CandidateView, Corpus, EpisodeLog, Event, EventKind, RewriteAttempt, RewriteOutcome, Session,
    SessionError, SessionHeader, SessionView, Status, Submission, SubmitPlan, DEFAULT_SAMPLE, DEFAULT_WINDOW,
};
use crate::store::{read_log, IndexEntry, LogError, SessionFile, Store, SESSION_DIR};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no session `{0}`")]
    NotFound(String),
    #[error("the question corpus is empty")]
    EmptyCorpus,
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Backend(BackendError),
    #[error("persistence failed: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartRequest {
    pub user_id: String,
    pub condition: Condition,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sample_size: Option<usize>,
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub show_scores: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewriteRequest {
    pub text: String,
    pub backend: String,
    #[serde(default)]
    pub same_page: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    #[serde(flatten)]
    pub submission: Submission,
    #[serde(default)]
    pub question_id: Option<String>,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RevealResponse {
    Revealed { candidate: CandidateView, revealed: usize, limit: usize },
    Exhausted { revealed: usize, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub session_id: String,
    pub user_id: String,
    pub condition: Condition,
    pub status: Status,
    pub episodes: Vec<EpisodeLog>,
}

struct Live {
    session: Session,
    file: Option<SessionFile>,
}

pub struct Service {
    corpus: Arc<Corpus>,
    backends: Backends,
    store: Option<Store>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Live>>>>,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl Service {
    /// A service that keeps sessions in memory only.
    pub fn in_memory(corpus: Arc<Corpus>, backends: Backends) -> Self {
        Service { corpus, backends, store: None, sessions: RwLock::new(HashMap::new()) }
    }

    /// A persistent service. Sessions already in the store are rebuilt by
    /// replaying their logs.
    pub fn open(corpus: Arc<Corpus>, backends: Backends, store: Store) -> Result<Self, ServiceError> {
        let mut sessions = HashMap::new();
        for entry in store.entries()? {
            let path = store.root().join(&entry.file);
            let events = read_log(&path)?;
            let session = Session::replay(&events, &corpus)?;
            let file = Some(store.reopen(&entry)?);
            sessions.insert(entry.session_id.clone(), Arc::new(Mutex::new(Live { session, file })));
        }
        Ok(Service { corpus, backends, store: Some(store), sessions: RwLock::new(sessions) })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().keys().cloned().collect();
        ids.sort();
        ids
    }

    fn live(&self, id: &str) -> Result<Arc<Mutex<Live>>, ServiceError> {
        self.sessions.read().get(id).cloned().ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn start_session(&self, req: StartRequest) -> Result<SessionView, ServiceError> {
        if req.user_id.trim().is_empty() {
            return Err(ServiceError::Invalid("user_id is empty".into()));
        }
        if self.corpus.is_empty() {
            return Err(ServiceError::EmptyCorpus);
        }
        let n = req.sample_size.unwrap_or(DEFAULT_SAMPLE);
        if n == 0 {
            return Err(ServiceError::Invalid("sample_size must be positive".into()));
        }
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let header = SessionHeader {
            session_id: session_id.clone(),
            user_id: req.user_id,
            condition: req.condition,
            seed: req.seed,
            window: req.window.unwrap_or(DEFAULT_WINDOW),
            show_scores: req.show_scores,
            questions: self.corpus.sample(req.seed, n),
        };
        let start = Event { seq: 0, at_ms: now_ms(), kind: EventKind::Start(header) };
        let session = Session::start(&start, &self.corpus)?;
        let file = match &self.store {
            Some(store) => {
                let entry = IndexEntry {
                    session_id: session_id.clone(),
                    user_id: session.header.user_id.clone(),
                    condition: session.header.condition,
                    created_ms: start.at_ms,
                    file: format!("{SESSION_DIR}/{session_id}.jsonl"),
                };
                Some(store.create(&entry, &start)?)
            }
            None => None,
        };
        let view = session.view(&self.corpus);
        self.sessions.write().insert(session_id, Arc::new(Mutex::new(Live { session, file })));
        Ok(view)
    }

    /// Applies one event and appends it to the log. The in-memory state only
    /// changes once the write succeeds.
    fn commit(&self, live: &mut Live, kind: EventKind, sync: bool) -> Result<Applied, ServiceError> {
        let event = Event { seq: live.session.next_seq, at_ms: now_ms(), kind };
        let mut next = live.session.clone();
        let applied = next.apply(&event, &self.corpus)?;
        if let Some(file) = &mut live.file {
            file.append(&event, sync)?;
        }
        live.session = next;
        Ok(applied)
    }

    pub fn current(&self, id: &str) -> Result<SessionView, ServiceError> {
        let live = self.live(id)?;
        let live = live.lock();
        Ok(live.session.view(&self.corpus))
    }

    pub fn reveal(&self, id: &str) -> Result<RevealResponse, ServiceError> {
        let live = self.live(id)?;
        let mut live = live.lock();
        let limit = live.session.reveal_limit(&self.corpus);
        let kind = match live.session.plan_reveal(&self.corpus) {
            Err(SessionError::Exhausted) => {
                let revealed = live.session.current.as_ref().map_or(0, |e| e.revealed);
                return Ok(RevealResponse::Exhausted { revealed, limit });
            }
            other => other?,
        };
        let Applied::Revealed(candidate) = self.commit(&mut live, kind, false)? else { unreachable!() };
        let revealed = candidate.index + 1;
        Ok(RevealResponse::Revealed { candidate, revealed, limit })
    }

    /// Queries a backend while holding the session lock. A failed query is
    /// logged and reported; the episode stays open.
    pub fn rewrite(&self, id: &str, req: RewriteRequest) -> Result<RewriteAttempt, ServiceError> {
        let live = self.live(id)?;
        let mut live = live.lock();
        let question_id = live.session.check_rewrite()?.to_string();
        if req.text.trim().is_empty() {
            return Err(ServiceError::Invalid("rewrite text is empty".into()));
        }
        if !self.backends.contains(&req.backend) {
            return Err(ServiceError::Invalid(format!("unknown backend `{}`", req.backend)));
        }
        let title = self.corpus.get(&question_id).map(|r| detokenize(&r.title)).unwrap_or_default();
        let request = BackendRequest { question: req.text.clone(), same_page: req.same_page, title };
        let result = self.backends.query(&req.backend, &request);
        let outcome = match &result {
            Ok(record) => RewriteOutcome::Ok(live.session.render_rewrite(record)),
            Err(e) => RewriteOutcome::Error(e.to_string()),
        };
        let attempt = RewriteAttempt { text: req.text, backend: req.backend, same_page: req.same_page, outcome };
        let kind = EventKind::Rewrite { question_id, attempt };
        let Applied::Rewritten(attempt) = self.commit(&mut live, kind, false)? else { unreachable!() };
        result.map_err(ServiceError::Backend)?;
        Ok(attempt)
    }

    /// Finalizes the active episode. The log is synced before returning.
    pub fn submit(&self, id: &str, req: SubmitRequest) -> Result<EpisodeLog, ServiceError> {
        let live = self.live(id)?;
        let mut live = live.lock();
        match live.session.plan_submit(req.question_id.as_deref(), req.submission, req.idempotency_key)? {
            SubmitPlan::Repeat(log) => Ok(log),
            SubmitPlan::Apply(kind) => {
                let Applied::Finalized(log) = self.commit(&mut live, kind, true)? else { unreachable!() };
                Ok(log)
            }
        }
    }

    pub fn log(&self, id: &str) -> Result<SessionLog, ServiceError> {
        let live = self.live(id)?;
        let live = live.lock();
        let s = &live.session;
        Ok(SessionLog {
            session_id: s.header.session_id.clone(),
            user_id: s.header.user_id.clone(),
            condition: s.header.condition,
            status: s.status(),
            episodes: s.episodes.clone(),
        })
    }

    /// A snapshot of the full session state.
    pub fn snapshot(&self, id: &str) -> Result<Session, ServiceError> {
        Ok(self.live(id)?.lock().session.clone())
    }
}
