#![no_main]

use libfuzzer_sys::fuzz_target;
use rkhs_cc::io::samples::parse_reference;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_reference(data) {
        assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
    }
});
