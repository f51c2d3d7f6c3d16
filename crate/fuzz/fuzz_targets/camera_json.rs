#![no_main]

use geomatch::camera::{Intrinsics, RigidPose};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(k) = serde_json::from_slice::<Intrinsics>(data) {
        let _ = k.inverse();
    }
    if let Ok(pose) = serde_json::from_slice::<RigidPose>(data) {
        let _ = pose.inverse();
    }
});
