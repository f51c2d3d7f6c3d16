#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((header, map)) = geomatch::grid_ops::decode_dense_map(data) {
        assert_eq!(header.height, map.height());
        assert_eq!(header.width, map.width());
    }
});
