#![no_main]
use libfuzzer_sys::fuzz_target;

use hetsim_core::policy::PolicySpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(policy) = text.parse::<PolicySpec>() {
        // Display/parse round-trip.
        let again: PolicySpec = policy.to_string().parse().unwrap();
        assert_eq!(again, policy);
    }
});
