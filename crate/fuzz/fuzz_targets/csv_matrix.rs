#![no_main]

use libfuzzer_sys::fuzz_target;
use riecur::io::{encode_csv_matrix, parse_csv_matrix};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = parse_csv_matrix(data, "fuzz") {
        let again = parse_csv_matrix(encode_csv_matrix(&m).as_bytes(), "fuzz").expect("re-parse");
        let bits = |x: &riecur::DenseMatrix| x.to_row_major().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&again), bits(&m));
    }
});
