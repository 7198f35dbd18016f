//! Parse and validate arbitrary text as a problem config. Accepted configs
//! must survive a serialize/parse round trip unchanged.

#![no_main]

use libfuzzer_sys::fuzz_target;

use gradcap::config::parse_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_config(text) {
        let again = parse_config(&spec.to_json_string()).expect("serialized config must parse");
        assert_eq!(spec, again);
    }
});
