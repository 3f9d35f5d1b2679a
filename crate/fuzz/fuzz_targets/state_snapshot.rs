#![no_main]

use danyra::engine::SwarmState;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(state) = SwarmState::from_json(text) {
        let again = SwarmState::from_json(&state.to_json().unwrap()).unwrap();
        assert_eq!(again.agents.len(), state.agents.len());
    }
});
