#![no_main]

use libfuzzer_sys::fuzz_target;
use metaqa_core::candidates::{is_answerable, parse_gold_record, read_gold_jsonl, Matcher};

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        if let Ok(gold) = parse_gold_record(line, 1) {
            let _ = is_answerable(&gold, Matcher::ExactSpan);
            let _ = is_answerable(&gold, Matcher::Surface);
        }
    }
    let _ = read_gold_jsonl(data);
});
