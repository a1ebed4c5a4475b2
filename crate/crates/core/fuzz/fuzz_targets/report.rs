#![no_main]

use libfuzzer_sys::fuzz_target;
use rkhs_cc::io::report::{parse_report, write_report};

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_report(data) {
        let mut out = Vec::new();
        write_report(&mut out, &rows).unwrap();
        let back = parse_report(out.as_slice()).unwrap();
        assert_eq!(back.len(), rows.len());
    }
});
