#![no_main]

use danyra::oracle::OracleSolution;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(sol) = OracleSolution::from_json(text) {
            let _ = sol.stacked();
        }
    }
});
