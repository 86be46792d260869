#![no_main]

use libfuzzer_sys::fuzz_target;
use metaqa_core::decoder::{parse_prediction, read_predictions};

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        let _ = parse_prediction(line, 1);
    }
    let _ = read_predictions(data);
});
