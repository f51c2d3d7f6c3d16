#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = geomatch::matching::read_correlation(&mut &data[..]);
});
