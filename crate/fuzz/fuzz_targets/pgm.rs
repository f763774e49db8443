#![no_main]

use libfuzzer_sys::fuzz_target;
use riecur::io::{decode_pgm, encode_pgm};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_pgm(data, "fuzz") {
        assert_eq!(img.pixels.len(), img.width * img.height);
        // Pixels are kept raw, so a maxval-255 re-encode decodes identically.
        assert_eq!(decode_pgm(&encode_pgm(&img), "fuzz").expect("re-decode"), img);
    }
});
