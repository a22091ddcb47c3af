#![no_main]

use dilatlab::variational::BatteryFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(b) = BatteryFile::parse(text) {
        assert!(!b.curves.is_empty());
        assert!(b.probes.times().iter().all(|t| *t > 0.0 && *t < 1.0));
    }
});
