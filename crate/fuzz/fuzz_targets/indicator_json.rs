#![no_main]

use geomatch::planar::IndicatorFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(file) = serde_json::from_slice::<IndicatorFile>(data) {
        let _ = file.decode();
    }
});
