#![no_main]
use libfuzzer_sys::fuzz_target;

use hetsim_cli::config::ConfigFile;

// The full config pipeline on arbitrary text: parse, schema-validate, and
// build the domain specs. Must never panic.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ConfigFile::parse_str(text) {
        let _ = cfg.system_config();
        let _ = cfg.policy();
        let _ = cfg.probes();
        let _ = cfg.run_spec();
        let _ = cfg.sweep_spec();
    }
});
