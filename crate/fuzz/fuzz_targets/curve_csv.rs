#![no_main]

use dilatlab::curves::SampledCurve;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = SampledCurve::from_csv(text) {
        let again = SampledCurve::from_csv(&c.to_csv()).expect("written curve parses");
        assert_eq!(again.len(), c.len());
    }
});
