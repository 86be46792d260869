#![no_main]

use libfuzzer_sys::fuzz_target;
use metaqa_play::{RewriteRequest, StartRequest, SubmitRequest};

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<StartRequest>(data);
    let _ = serde_json::from_slice::<RewriteRequest>(data);
    let _ = serde_json::from_slice::<SubmitRequest>(data);
});
