#![no_main]

use danyra::cli::{parse_config, Overrides};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_config(Some(text), &Overrides::default());
    }
});
