#![no_main]
use libfuzzer_sys::fuzz_target;

use hetsim_core::metrics::ProbeId;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(probe) = text.parse::<ProbeId>() {
        let again: ProbeId = probe.to_string().parse().unwrap();
        assert_eq!(again, probe);
    }
});
