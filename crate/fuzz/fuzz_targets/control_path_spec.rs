#![no_main]

use libfuzzer_sys::fuzz_target;

use gradcap::control::parse_control_specs;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for dim in [1, 2] {
        if let Ok(specs) = parse_control_specs(text, dim) {
            assert!(!specs.is_empty());
            for s in &specs {
                assert_eq!(s.direction.len(), dim);
                assert!(s.rate.is_finite() && s.rate >= 0.0);
            }
        }
    }
});
