#![no_main]

use libfuzzer_sys::fuzz_target;
use metaqa_core::train::{Preset, TrainConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(overlay) = serde_json::from_slice::<serde_json::Value>(data) else { return };
    for preset in Preset::ALL {
        let _ = TrainConfig::layered(preset, Some(&overlay));
    }
});
