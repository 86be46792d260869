#![no_main]

use libfuzzer_sys::fuzz_target;
use metaqa_core::candidates::{tokenize, MBestRecord, Observation};
use metaqa_play::{Corpus, Event, Session};

fn corpus() -> Corpus {
    let records = (0..4)
        .map(|q| {
            let cands = (0..25)
                .map(|i| Observation {
                    left: tokenize("left"),
                    answer: tokenize(&format!("a{i}")),
                    right: tokenize("right"),
                    score: -(i as f64),
                    span_start: i,
                    span_end: i + 1,
                })
                .collect();
            MBestRecord::new(format!("q{q:05}"), tokenize("question"), tokenize("page"), cands, None).unwrap()
        })
        .collect();
    Corpus::new(records).unwrap()
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let events: Vec<Event> = text.lines().filter_map(|l| serde_json::from_str(l).ok()).collect();
    if events.is_empty() {
        return;
    }
    let _ = Session::replay(&events, &corpus());
});
