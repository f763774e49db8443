#![no_main]

use libfuzzer_sys::fuzz_target;
use riecur::io::{decode_matrix, encode_matrix};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = decode_matrix(data, "fuzz") {
        // Anything accepted must re-encode to the same bytes.
        assert_eq!(encode_matrix(&m), data);
    }
});
