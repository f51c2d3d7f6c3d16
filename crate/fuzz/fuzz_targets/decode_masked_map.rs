#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((_, map, mask)) = geomatch::grid_ops::decode_masked_map(data) {
        assert_eq!((map.height(), map.width()), (mask.height(), mask.width()));
    }
});
