#![no_main]

use libfuzzer_sys::fuzz_target;
use rplsim::scenario::{load_scenario, serialize};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = load_scenario(text) {
        let again = load_scenario(&serialize(&cfg)).expect("serialized scenario reloads");
        assert_eq!(cfg, again);
    }
});
