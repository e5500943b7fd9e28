#![no_main]

use libfuzzer_sys::fuzz_target;
use multibubble::io::{config_to_json, parse_config_str};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Accepted configurations survive a canonical round trip.
    if let Ok(cfg) = parse_config_str(text) {
        let again = parse_config_str(&config_to_json(&cfg)).expect("canonical form reparses");
        assert_eq!(again, cfg);
    }
});
