#![no_main]

use dilatlab::metric::FiniteSample;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = FiniteSample::parse_matrix_text(text) {
        // Accepted samples round-trip through the writer.
        let again = FiniteSample::parse_matrix_text(&s.to_matrix_text(None)).expect("written matrix parses");
        assert_eq!(again.len(), s.len());
        assert_eq!(again.base(), s.base());
    }
});
