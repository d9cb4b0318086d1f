#![no_main]
use libfuzzer_sys::fuzz_target;

use hetsim_cli::output::validate_results_json;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = validate_results_json(text);
});
