#![no_main]

use dilatlab_cli::config::{Config, Kind};
use libfuzzer_sys::fuzz_target;
use std::path::Path;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = Config::parse(text, Path::new(".")) {
        let _ = cfg.seed();
        for kind in Kind::ALL {
            if let Ok(s) = cfg.section(kind) {
                for key in kind.keys() {
                    assert!(s.entries.get(*key).map_or(true, |e| e.line >= 1));
                }
            }
        }
    }
});
