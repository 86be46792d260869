//! Episode service for human meta-answerers: progressive candidate reveal
//! under a viewing condition, question rewrites routed to QA backends, and
//! append-only per-session logs.

pub mod backend;
pub mod http;
pub mod service;
pub mod session;
pub mod store;

pub use backend::{BackendError, BackendRequest, Backends, QaBackend, SelfBackend, StubBackend};
pub use http::{router, serve};
pub use service::{RevealResponse, RewriteRequest, Service, ServiceError, SessionLog, StartRequest, SubmitRequest};
pub use session::{
    CandidateView, Corpus, EpisodeLog, Event, EventKind, FinalDecision, Session, SessionError, SessionView, Status,
    Submission, REVEAL_LIMIT,
};
pub use store::{read_log, Store};
