//! Meta-answering over the M-best lists of an extractive QA system.
//!
//! A meta-answerer sees only short snippets around each candidate answer
//! and must pick one candidate or abstain. This crate holds the data model,
//! a small trainable encoder with answer/evidence/impossibility heads, the
//! greedy evidence decoder, and the evaluation protocol.

pub mod candidates;
pub mod decoder;
pub mod encoder;
pub mod evaluation;
pub mod gradcheck;
pub mod heads;
pub mod train;
pub mod synth;
