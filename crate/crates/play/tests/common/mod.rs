#![allow(dead_code)]

use std::sync::Arc;

use metaqa_core::candidates::{tokenize, MBestRecord, Observation};
use metaqa_play::{Backends, Corpus, Service, Store};

pub fn record(qid: &str, m: usize) -> MBestRecord {
    let cands = (0..m)
        .map(|i| Observation {
            left: tokenize(&format!("the {qid} left {i}")),
            answer: tokenize(&format!("{qid} answer {i}")),
            right: tokenize(&format!("right {i} ends")),
            score: 100.0 - i as f64,
            span_start: 5 * i as u64,
            span_end: 5 * i as u64 + 2,
        })
        .collect();
    let question = format!("what is the {qid} thing");
    MBestRecord::new(qid.into(), tokenize(&question), tokenize(&format!("page {qid}")), cands, None).unwrap()
}

/// 30 questions with 25 candidates each.
pub fn corpus() -> Arc<Corpus> {
    Arc::new(Corpus::new((0..30).map(|i| record(&format!("q{i:02}"), 25)).collect()).unwrap())
}

pub fn persistent(dir: &std::path::Path) -> Service {
    let corpus = corpus();
    Service::open(corpus.clone(), Backends::standard(corpus), Store::open(dir).unwrap()).unwrap()
}
