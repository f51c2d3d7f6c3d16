#![no_main]

use geomatch::pipeline::SceneSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<SceneSpec>(data);
});
