#![no_main]

use danyra::problem::ProblemInstance;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(inst) = ProblemInstance::from_json(text) {
        let again = ProblemInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(again.n(), inst.n());
    }
});
