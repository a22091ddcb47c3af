#![no_main]

use dilatlab::dilation::DilatationStructure;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = DilatationStructure::parse(text) {
        // The canonical label names the same structure.
        let again = DilatationStructure::parse(ds.label()).expect("label parses");
        assert_eq!(again.label(), ds.label());
        assert_eq!(again.dim(), ds.dim());
    }
});
