#![no_main]
use libfuzzer_sys::fuzz_target;

use hetsim_core::oracle::drift::LemmaId;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(lemma) = text.parse::<LemmaId>() {
        let again: LemmaId = lemma.to_string().parse().unwrap();
        assert_eq!(again, lemma);
    }
});
