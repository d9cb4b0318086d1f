#![no_main]
use libfuzzer_sys::fuzz_target;

use hetsim_core::model::{capacity_index, make_profile, ProfileSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = text.parse::<ProfileSpec>() else { return };
    let n = match &spec {
        ProfileSpec::Explicit { rates } => rates.len(),
        _ => 1 + data.len() % 64,
    };
    if let Ok(profile) = make_profile(&spec, n) {
        // Normalization and ordering invariants hold for every accepted input.
        assert!((profile.total_rate() - n as f64).abs() <= 1e-9 * n as f64);
        assert!(profile.rates().windows(2).all(|w| w[0] >= w[1]));
        assert!(profile.epsilon() > 0.0);
        let _ = capacity_index(&profile, profile.total_rate() / 2.0);
    }
});
