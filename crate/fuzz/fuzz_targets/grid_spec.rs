#![no_main]

use libfuzzer_sys::fuzz_target;
use riecur::experiment::GridSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = text.parse::<GridSpec>() {
            let _ = spec.validate();
            let _ = spec.points();
        }
    }
});
