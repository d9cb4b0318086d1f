#![no_main]
use libfuzzer_sys::fuzz_target;

use hetsim_cli::config::apply_override;

const BASE: &str = r#"
[system]
n = 2
lambda = 0.5
buffer_b = 2
profile = { kind = "homogeneous" }

[run]
horizon_events = 100
seed = 1

[policy]
kind = "jfsq"
"#;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut doc: toml::Value = toml::from_str(BASE).unwrap();
    let _ = apply_override(&mut doc, text);
});
