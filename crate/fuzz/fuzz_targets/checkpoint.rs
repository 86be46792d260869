#![no_main]

use libfuzzer_sys::fuzz_target;
use metaqa_core::train::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Anything that loads must also be usable for inference setup.
    if let Ok(ckpt) = Checkpoint::from_json(text) {
        let _ = ckpt.answerer();
    }
});
