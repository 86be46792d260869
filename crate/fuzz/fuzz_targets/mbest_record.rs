#![no_main]

use libfuzzer_sys::fuzz_target;
use metaqa_core::candidates::{parse_mbest_record, read_mbest_jsonl};

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        if let Ok(record) = parse_mbest_record(line, 1) {
            assert!(record.m() > 0);
        }
    }
    let _ = read_mbest_jsonl(data);
});
