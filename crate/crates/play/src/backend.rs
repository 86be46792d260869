//! Question-answering backends that serve rewritten questions.

use std::collections::{BTreeMap, HashSet};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Duration;

use metaqa_core::candidates::{normalized, tokenize, MBestRecord, Observation, RecordErrorKind};
use thiserror::Error;

use crate::session::Corpus;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq)]
pub struct BackendRequest {
    pub question: String,
    /// Restrict answers to the page the active question came from.
    pub same_page: bool,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend `{0}` is not registered")]
    Unknown(String),
    #[error("no answers for this question")]
    NoResult,
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend returned an invalid list: {0}")]
    Invalid(RecordErrorKind),
}

pub trait QaBackend: Send + Sync {
    fn query(&self, request: &BackendRequest) -> Result<MBestRecord, BackendError>;
}

fn key(text: &str) -> Vec<String> {
    normalized(&tokenize(text))
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .map(str::to_string)
        .collect()
}

/// Serves fixed records keyed by question text (case and punctuation
/// insensitive).
#[derive(Debug, Clone)]
pub struct StubBackend {
    canned: Vec<(Vec<String>, MBestRecord)>,
}

pub const STUB_QUESTION: &str = "Who did Jesse McCartney play in Horton Hears a Who";

impl Default for StubBackend {
    fn default() -> Self {
        let obs = |left: &str, answer: &str, right: &str, score: f64, start: u64| Observation {
            left: tokenize(left),
            answer: tokenize(answer),
            right: tokenize(right),
            score,
            span_start: start,
            span_end: start + tokenize(answer).len() as u64 - 1,
        };
        let record = MBestRecord::new(
            "stub-horton".into(),
            tokenize(STUB_QUESTION),
            tokenize("Horton Hears a Who!"),
            vec![
                obs("Jesse McCartney as", "JoJo", ", the Mayor's son", 9.1, 212),
                obs("JoJo ,", "the Mayor's son", "who would rather", 6.4, 214),
                obs("Jim Carrey as", "Horton the Elephant", ", Steve Carell", 3.2, 180),
            ],
            None,
        )
        .expect("canned record is valid");
        StubBackend { canned: vec![(key(STUB_QUESTION), record)] }
    }
}

impl StubBackend {
    pub fn with(mut self, question: &str, record: MBestRecord) -> Self {
        self.canned.push((key(question), record));
        self
    }
}

impl QaBackend for StubBackend {
    fn query(&self, request: &BackendRequest) -> Result<MBestRecord, BackendError> {
        let k = key(&request.question);
        self.canned.iter().find(|(q, _)| *q == k).map(|(_, r)| r.clone()).ok_or(BackendError::NoResult)
    }
}

/// Answers a rewritten question with the list of the most similar
/// question in the loaded dump.
pub struct SelfBackend {
    corpus: Arc<Corpus>,
    min_similarity: f64,
}

impl SelfBackend {
    pub fn new(corpus: Arc<Corpus>) -> Self {
        SelfBackend { corpus, min_similarity: 0.2 }
    }
}

/// Jaccard similarity of content-word sets.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a: HashSet<String> = key(a).into_iter().collect();
    let b: HashSet<String> = key(b).into_iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

impl QaBackend for SelfBackend {
    fn query(&self, request: &BackendRequest) -> Result<MBestRecord, BackendError> {
        let title = key(&request.title);
        let mut best: Option<(f64, &MBestRecord)> = None;
        for r in self.corpus.records() {
            if request.same_page && key(&metaqa_core::candidates::detokenize(&r.title)) != title {
                continue;
            }
            let s = similarity(&request.question, &metaqa_core::candidates::detokenize(&r.question));
            if s >= self.min_similarity && best.is_none_or(|(b, _)| s > b) {
                best = Some((s, r));
            }
        }
        best.map(|(_, r)| r.clone()).ok_or(BackendError::NoResult)
    }
}

/// Registered backends by id.
#[derive(Clone, Default)]
pub struct Backends {
    map: BTreeMap<String, Arc<dyn QaBackend>>,
    timeout: Option<Duration>,
}

impl Backends {
    /// The stub and the self backend over `corpus`.
    pub fn standard(corpus: Arc<Corpus>) -> Self {
        Backends::default()
            .register("stub", Arc::new(StubBackend::default()))
            .register("self", Arc::new(SelfBackend::new(corpus)))
    }

    pub fn register(mut self, id: &str, backend: Arc<dyn QaBackend>) -> Self {
        self.map.insert(id.to_string(), backend);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.map.contains_key(id)
    }

    /// Runs the query on its own thread so a hung backend cannot stall the
    /// session past the timeout. The response is revalidated.
    pub fn query(&self, id: &str, request: &BackendRequest) -> Result<MBestRecord, BackendError> {
        let backend = self.map.get(id).cloned().ok_or_else(|| BackendError::Unknown(id.to_string()))?;
        let timeout = self.timeout.unwrap_or(DEFAULT_TIMEOUT);
        let (tx, rx) = mpsc::channel();
        let request = request.clone();
        thread::spawn(move || {
            let _ = tx.send(backend.query(&request));
        });
        let record = match rx.recv_timeout(timeout) {
            Ok(r) => r?,
            Err(mpsc::RecvTimeoutError::Timeout) => return Err(BackendError::Timeout(timeout)),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                return Err(BackendError::Unavailable("backend panicked".into()))
            }
        };
        MBestRecord::new(record.question_id, record.question, record.title, record.candidates, record.qa_threshold_score)
            .map_err(BackendError::Invalid)
    }
}
